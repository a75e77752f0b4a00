//! Conflict relations (plain and with transaction status) and partial order
//! pair (POP) extraction.
//!
//! A conflict is two ops from different transactions on the same variable,
//! at least one a write, ordered by schedule position; versions are ignored
//! for pairing. Each conflict falls into one of seven status categories by
//! where the two transactions' terminal ops sit relative to the pair, and
//! each non-inert category maps to one of the nine POP kinds.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schedule::{Schedule, TxnId, TxnStatus};

/// Shape of a conflicting op pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictShape {
    RW,
    WR,
    WW,
}

/// One conflicting op pair `(p, q)` with `p.pos < q.pos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Conflict {
    pub first_pos: usize,
    pub second_pos: usize,
    pub from: TxnId,
    pub to: TxnId,
    pub var_idx: usize,
    pub shape: ConflictShape,
}

/// The seven status interleavings of a conflict `(p_i, q_j)`.
///
/// Categories 1-4 mean `t_i`'s terminal settles the pair first (before `q_j`
/// for 1-2, after it for 3-4); categories 5-6 mean `t_j`'s terminal comes
/// first; category 7 means both transactions are undone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatusCategory {
    FirstCommitsBeforeSecondOp = 1,
    FirstAbortsBeforeSecondOp = 2,
    FirstCommitsAfterSecondOp = 3,
    FirstAbortsAfterSecondOp = 4,
    SecondCommitsFirst = 5,
    SecondAbortsFirst = 6,
    BothUndone = 7,
}

impl StatusCategory {
    /// Categories (2) and (6): the abort lands in time to undo the pair, so
    /// no POP is generated.
    pub fn is_inert(self) -> bool {
        matches!(
            self,
            StatusCategory::FirstAbortsBeforeSecondOp | StatusCategory::SecondAbortsFirst
        )
    }
}

/// A conflict annotated with its status category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatusedConflict {
    pub conflict: Conflict,
    pub category: StatusCategory,
    /// Position of the terminal op that decided the category, if any.
    pub status_pos: Option<usize>,
}

impl StatusedConflict {
    pub fn is_inert(&self) -> bool {
        self.category.is_inert()
    }
}

/// The nine-kind POP alphabet.
///
/// `WCR`/`WCW`/`RCW` carry the first transaction's commit between the two
/// ops; `WW`/`WR`/`RW` are the folded base kinds; `WRA`/`WWC`/`WWA` are the
/// self-cycle kinds whose terminal lands after the second op and which form
/// a two-transaction cycle on their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PopKind {
    WCR,
    WCW,
    RCW,
    WW,
    WR,
    RW,
    WRA,
    WWC,
    WWA,
}

impl PopKind {
    pub fn is_self_cycle(self) -> bool {
        matches!(self, PopKind::WRA | PopKind::WWC | PopKind::WWA)
    }

    /// Kinds that contain an uncommitted double write (the WAT triggers).
    pub fn is_double_write(self) -> bool {
        matches!(self, PopKind::WW | PopKind::WWC | PopKind::WWA)
    }

    /// Kinds that contain an uncommitted write-then-read (the RAT triggers).
    pub fn is_write_read(self) -> bool {
        matches!(self, PopKind::WR | PopKind::WRA)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PopKind::WCR => "WCR",
            PopKind::WCW => "WCW",
            PopKind::RCW => "RCW",
            PopKind::WW => "WW",
            PopKind::WR => "WR",
            PopKind::RW => "RW",
            PopKind::WRA => "WRA",
            PopKind::WWC => "WWC",
            PopKind::WWA => "WWA",
        }
    }
}

impl fmt::Display for PopKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A partial order pair: a directed edge between transactions on a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PopEdge {
    pub from: TxnId,
    pub to: TxnId,
    pub var: String,
    pub kind: PopKind,
    /// Positions of the defining ops, in order; self-cycle and commit-prefixed
    /// kinds include the terminal position the kind's name carries.
    pub anchors: Vec<usize>,
    /// Marks the notational back edge of a self-cycle POP.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub implicit_back: bool,
}

impl PopEdge {
    /// Symbolic rendering in the paper's notation, e.g. `W1R2C2[x]`.
    pub fn symbol(&self, s: &Schedule) -> String {
        let mut out = String::new();
        for &pos in &self.anchors {
            let op = &s.ops()[pos];
            let letter = match op.action {
                crate::schedule::Action::Read { .. } => 'R',
                crate::schedule::Action::Write { .. } => 'W',
                crate::schedule::Action::Commit => 'C',
                crate::schedule::Action::Abort => 'A',
            };
            out.push(letter);
            out.push_str(&op.txn.to_string());
        }
        out.push('[');
        out.push_str(&self.var);
        out.push(']');
        out
    }

    pub fn label(&self) -> String {
        format!("{}[{}]", self.kind, self.var)
    }
}

/// Kind-assignment knobs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PopsOptions {
    /// Enforce the side-condition that an RCW edge's reading transaction
    /// must contain a write somewhere. Off by default: the figure and table
    /// material uses RCW edges from read-only transactions.
    pub strict_rcw: bool,
}

/// conf(s): every conflicting op pair, in schedule order.
pub fn conf(s: &Schedule) -> Vec<Conflict> {
    let vars: Vec<&String> = s.vars().iter().collect();
    let var_index: BTreeMap<&str, usize> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let mut out = Vec::new();
    let ops = s.ops();
    for (i, p) in ops.iter().enumerate() {
        let Some(pv) = p.action.var() else { continue };
        for q in &ops[i + 1..] {
            let Some(qv) = q.action.var() else { continue };
            if pv != qv || p.txn == q.txn {
                continue;
            }
            let shape = match (p.action.is_write(), q.action.is_write()) {
                (true, true) => ConflictShape::WW,
                (true, false) => ConflictShape::WR,
                (false, true) => ConflictShape::RW,
                (false, false) => continue,
            };
            out.push(Conflict {
                first_pos: p.pos,
                second_pos: q.pos,
                from: p.txn,
                to: q.txn,
                var_idx: var_index[pv],
                shape,
            });
        }
    }
    out
}

/// Symbolic view of a conflict set, deduplicated the way the paper writes
/// `conf(s)`: one entry per (shape, txn pair, variable).
pub fn conf_symbols(s: &Schedule, conflicts: &[Conflict]) -> Vec<String> {
    let vars: Vec<&String> = s.vars().iter().collect();
    let mut seen = std::collections::BTreeSet::new();
    for c in conflicts {
        let (a, b) = match c.shape {
            ConflictShape::RW => ('R', 'W'),
            ConflictShape::WR => ('W', 'R'),
            ConflictShape::WW => ('W', 'W'),
        };
        seen.insert(format!("{}{}{}{}[{}]", a, c.from, b, c.to, vars[c.var_idx]));
    }
    seen.into_iter().collect()
}

/// conf_ac(s): every conflict annotated with its status category.
pub fn conf_ac(s: &Schedule) -> Vec<StatusedConflict> {
    conf(s).into_iter().map(|c| annotate(s, c)).collect()
}

fn annotate(s: &Schedule, c: Conflict) -> StatusedConflict {
    let ta = s.status(c.from);
    let tb = s.status(c.to);
    let ta_pos = ta.terminal_pos();
    let tb_pos = tb.terminal_pos();
    // q always precedes t_b's terminal, and p precedes t_a's; the category
    // is decided by which terminal settles the pair first.
    let (category, status_pos) = match (ta, ta_pos) {
        (TxnStatus::Committed { pos }, _) if pos < c.second_pos => {
            (StatusCategory::FirstCommitsBeforeSecondOp, Some(pos))
        }
        (TxnStatus::Aborted { pos }, _) if pos < c.second_pos => {
            (StatusCategory::FirstAbortsBeforeSecondOp, Some(pos))
        }
        _ => {
            let ta_first = match (ta_pos, tb_pos) {
                (Some(a), Some(b)) => a < b,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if ta_first {
                match ta {
                    TxnStatus::Committed { pos } => {
                        (StatusCategory::FirstCommitsAfterSecondOp, Some(pos))
                    }
                    TxnStatus::Aborted { pos } => {
                        (StatusCategory::FirstAbortsAfterSecondOp, Some(pos))
                    }
                    TxnStatus::Undone => unreachable!(),
                }
            } else {
                match tb {
                    TxnStatus::Committed { pos } => (StatusCategory::SecondCommitsFirst, Some(pos)),
                    TxnStatus::Aborted { pos } => (StatusCategory::SecondAbortsFirst, Some(pos)),
                    TxnStatus::Undone => (StatusCategory::BothUndone, None),
                }
            }
        }
    };
    StatusedConflict {
        conflict: c,
        category,
        status_pos,
    }
}

/// Maps one non-inert statused conflict to its POP kind, applying the
/// folding rules: the second transaction's commit never changes the kind,
/// and a first-transaction terminal after the pair only matters for the
/// self-cycle shapes (`(W,W)` + C/A, `(W,R)` + A).
fn kind_of(s: &Schedule, sc: &StatusedConflict, opts: PopsOptions) -> Option<PopKind> {
    use ConflictShape::*;
    use StatusCategory::*;
    if sc.is_inert() {
        return None;
    }
    let shape = sc.conflict.shape;
    let kind = match sc.category {
        FirstCommitsBeforeSecondOp => match shape {
            WR => PopKind::WCR,
            WW => PopKind::WCW,
            RW => {
                if opts.strict_rcw && !txn_has_write(s, sc.conflict.from) {
                    return None;
                }
                PopKind::RCW
            }
        },
        FirstCommitsAfterSecondOp => match shape {
            WW => PopKind::WWC,
            WR => PopKind::WR,
            RW => PopKind::RW,
        },
        FirstAbortsAfterSecondOp => match shape {
            WW => PopKind::WWA,
            WR => PopKind::WRA,
            RW => PopKind::RW,
        },
        SecondCommitsFirst | BothUndone => match shape {
            WW => PopKind::WW,
            WR => PopKind::WR,
            RW => PopKind::RW,
        },
        FirstAbortsBeforeSecondOp | SecondAbortsFirst => unreachable!(),
    };
    Some(kind)
}

fn txn_has_write(s: &Schedule, txn: TxnId) -> bool {
    s.ops().iter().any(|o| o.txn == txn && o.action.is_write())
}

/// Pop(s): one edge per non-inert conflict, deduplicated on
/// `(from, to, var, kind)` keeping the earliest anchors.
pub fn pops(s: &Schedule) -> Vec<PopEdge> {
    pops_with(s, PopsOptions::default())
}

pub fn pops_with(s: &Schedule, opts: PopsOptions) -> Vec<PopEdge> {
    let vars: Vec<&String> = s.vars().iter().collect();
    let mut dedup: BTreeMap<(TxnId, TxnId, usize, PopKind), Vec<usize>> = BTreeMap::new();
    for sc in conf_ac(s) {
        let Some(kind) = kind_of(s, &sc, opts) else {
            continue;
        };
        let mut anchors = vec![sc.conflict.first_pos, sc.conflict.second_pos];
        match kind {
            PopKind::WCR | PopKind::WCW | PopKind::RCW => {
                // the commit sits between the two ops
                anchors.insert(1, sc.status_pos.unwrap());
            }
            PopKind::WRA | PopKind::WWC | PopKind::WWA => {
                anchors.push(sc.status_pos.unwrap());
            }
            _ => {}
        }
        let key = (sc.conflict.from, sc.conflict.to, sc.conflict.var_idx, kind);
        dedup
            .entry(key)
            .and_modify(|a| {
                if anchors < *a {
                    *a = anchors.clone();
                }
            })
            .or_insert(anchors);
    }
    dedup
        .into_iter()
        .map(|((from, to, var_idx, kind), anchors)| PopEdge {
            from,
            to,
            var: vars[var_idx].clone(),
            kind,
            anchors,
            implicit_back: false,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{parse, ParseOptions};

    fn sched(text: &str) -> Schedule {
        parse(text, ParseOptions::default()).unwrap()
    }

    fn lax(text: &str) -> Schedule {
        parse(text, ParseOptions { lax_versions: true }).unwrap()
    }

    fn pop_symbols(s: &Schedule) -> Vec<String> {
        pops(s).iter().map(|e| e.symbol(s)).collect()
    }

    #[test]
    fn example_1_conflict_relation() {
        let s = lax("W1[x0]W1[x1]W2[x3]R1[x3]C1C2");
        let symbols = conf_symbols(&s, &conf(&s));
        assert_eq!(symbols, vec!["W1W2[x]", "W2R1[x]"]);
    }

    #[test]
    fn single_transaction_has_no_conflicts() {
        assert!(conf(&sched("R1[x0]W1[x1]C1")).is_empty());
    }

    #[test]
    fn read_read_is_not_a_conflict() {
        assert!(conf(&sched("R1[x0]R2[x0]C1C2")).is_empty());
    }

    #[test]
    fn example_2_statused_conflicts() {
        let s = sched("R1[x0]R1[y0]W2[y1]W3[z1]W1[z2]C2W3[y2]");
        let symbols = conf_symbols(&s, &conf(&s));
        assert_eq!(
            symbols,
            vec!["R1W2[y]", "R1W3[y]", "W2W3[y]", "W3W1[z]"]
        );
        // (W2, C2, W3 on y) is a category-(1) conflict.
        let cat1 = conf_ac(&s)
            .into_iter()
            .find(|sc| sc.conflict.from == 2 && sc.conflict.to == 3)
            .unwrap();
        assert_eq!(cat1.category, StatusCategory::FirstCommitsBeforeSecondOp);
        assert_eq!(cat1.status_pos, Some(5));
    }

    #[test]
    fn abort_before_second_op_is_inert() {
        // Hand-ordered against Definition 4 case (2): W1, A1, R2, C2.
        let s = sched("W1[x1]A1R2[x0]C2");
        let scs = conf_ac(&s);
        assert_eq!(scs.len(), 1);
        assert_eq!(scs[0].category, StatusCategory::FirstAbortsBeforeSecondOp);
        assert!(scs[0].is_inert());
        assert!(pops(&s).is_empty());
    }

    #[test]
    fn both_undone_is_category_7() {
        let s = sched("W1[x1]R2[x1]");
        let scs = conf_ac(&s);
        assert_eq!(scs[0].category, StatusCategory::BothUndone);
        assert_eq!(pops(&s)[0].kind, PopKind::WR);
    }

    #[test]
    fn example_3_pop_set() {
        let s = sched("W1[x]R2[x]A1W2[y]C2R3[y]");
        let edges = pops(&s);
        assert_eq!(pop_symbols(&s), vec!["W1R2A1[x]", "W2C2R3[y]"]);
        assert_eq!(edges[0].kind, PopKind::WRA);
        assert_eq!((edges[0].from, edges[0].to), (1, 2));
        assert_eq!(edges[1].kind, PopKind::WCR);
        assert_eq!((edges[1].from, edges[1].to), (2, 3));
    }

    #[test]
    fn example_4_pop_set() {
        let s = sched("R1[x0]W2[x1]W2[y1]W3[y2]W3[z1]R1[z1]R3[x1]W4[x2]");
        let symbols = pop_symbols(&s);
        // The paper lists six POPs; (R3W4[x]) is a seventh conflict it
        // omits, but it satisfies Definitions 3 and 7 all the same.
        for expected in [
            "R1W2[x]", "R1W4[x]", "W2R3[x]", "W2W4[x]", "W2W3[y]", "W3R1[z]",
        ] {
            assert!(symbols.contains(&expected.to_string()), "{expected}");
        }
        assert_eq!(symbols.len(), 7);
        assert!(symbols.contains(&"R3W4[x]".to_string()));
    }

    #[test]
    fn single_transaction_has_no_pops() {
        assert!(pops(&sched("R1[x0]W1[x1]W1[y1]C1")).is_empty());
    }

    #[test]
    fn self_cycle_kinds_require_terminal_after_pair() {
        assert_eq!(pops(&sched("W1[x1]W2[x2]C1"))[0].kind, PopKind::WWC);
        assert_eq!(pops(&sched("W1[x1]W2[x2]A1"))[0].kind, PopKind::WWA);
        assert_eq!(pops(&sched("W1[x1]R2[x1]A1"))[0].kind, PopKind::WRA);
        // Second transaction's commit folds into the base kind.
        assert_eq!(pops(&sched("W1[x1]W2[x2]C2"))[0].kind, PopKind::WW);
        assert_eq!(pops(&sched("W1[x1]R2[x1]C2"))[0].kind, PopKind::WR);
    }

    #[test]
    fn commit_after_pair_folds_wr_and_rw() {
        // Definition 7 cases (10)-(12).
        assert_eq!(pops(&sched("R1[x0]W2[x1]C1"))[0].kind, PopKind::RW);
        assert_eq!(pops(&sched("W1[x1]R2[x1]C1"))[0].kind, PopKind::WR);
        assert_eq!(pops(&sched("R1[x0]W2[x1]A1"))[0].kind, PopKind::RW);
    }

    #[test]
    fn second_abort_first_is_inert() {
        // Category (6): t2 aborts after its op, before t1 terminates.
        let s = sched("W1[x1]W2[x2]A2C1");
        let scs = conf_ac(&s);
        assert_eq!(scs[0].category, StatusCategory::SecondAbortsFirst);
        assert!(pops(&s).is_empty());
    }

    #[test]
    fn rcw_strict_flag_requires_a_write_in_the_reader() {
        let s = sched("R1[x0]C1W2[x1]");
        assert_eq!(pops(&s)[0].kind, PopKind::RCW);
        assert!(pops_with(&s, PopsOptions { strict_rcw: true }).is_empty());
        // With a write in the reading transaction the edge survives.
        let s = sched("R1[x0]W1[y1]C1W2[x1]");
        assert_eq!(
            pops_with(&s, PopsOptions { strict_rcw: true })[0].kind,
            PopKind::RCW
        );
    }

    #[test]
    fn pops_never_exceed_conflicts() {
        for text in [
            "W1[x1]R2[x1]A1",
            "R1[x0]W2[x1]W1[x2]",
            "W1[x1]A1R2[x0]C2",
            "R1[x0]W2[x1]R2[y0]W1[y1]C1C2",
        ] {
            let s = sched(text);
            assert!(pops(&s).len() <= conf(&s).len());
        }
    }
}
