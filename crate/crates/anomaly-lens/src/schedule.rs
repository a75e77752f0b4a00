//! Domain types for operations and schedules, the textual schedule grammar,
//! parsing with version inference, and structural validation.
//!
//! Grammar (whitespace-insensitive, `#` comments to end of line):
//!
//! ```text
//! schedule := ws (item ws)* ;
//! item     := ("R"|"W") int "[" var int? "]" | ("C"|"A") int ;
//! var      := [a-z][a-z0-9_]* ;  int := [0-9]+ ;
//! ```
//!
//! A write without an explicit version gets `max written version so far + 1`
//! (starting at 1); a read without one binds to the latest written version,
//! else 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transaction id (positive).
pub type TxnId = u32;
/// Version number of a variable; 0 is the initial, never-written version.
pub type Version = u32;

/// What a single schedule event does.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Read { var: String, version: Version },
    Write { var: String, version: Version },
    Commit,
    Abort,
}

impl Action {
    pub fn is_data(&self) -> bool {
        matches!(self, Action::Read { .. } | Action::Write { .. })
    }

    pub fn is_write(&self) -> bool {
        matches!(self, Action::Write { .. })
    }

    pub fn var(&self) -> Option<&str> {
        match self {
            Action::Read { var, .. } | Action::Write { var, .. } => Some(var),
            _ => None,
        }
    }

    pub fn version(&self) -> Option<Version> {
        match self {
            Action::Read { version, .. } | Action::Write { version, .. } => Some(*version),
            _ => None,
        }
    }
}

/// One event of a schedule: a read/write on a versioned variable, or a
/// commit/abort, with its zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Op {
    pub pos: usize,
    pub txn: TxnId,
    pub action: Action,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            Action::Read { var, version } => write!(f, "R{}[{}{}]", self.txn, var, version),
            Action::Write { var, version } => write!(f, "W{}[{}{}]", self.txn, var, version),
            Action::Commit => write!(f, "C{}", self.txn),
            Action::Abort => write!(f, "A{}", self.txn),
        }
    }
}

/// Terminal state of a transaction within a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxnStatus {
    Committed { pos: usize },
    Aborted { pos: usize },
    /// No terminal op; the transaction is still running when the schedule ends.
    Undone,
}

impl TxnStatus {
    /// Position of the terminal op, if any.
    pub fn terminal_pos(&self) -> Option<usize> {
        match self {
            TxnStatus::Committed { pos } | TxnStatus::Aborted { pos } => Some(*pos),
            TxnStatus::Undone => None,
        }
    }
}

/// An ordered sequence of ops with derived per-transaction status.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    ops: Vec<Op>,
    txns: BTreeSet<TxnId>,
    vars: BTreeSet<String>,
    status: BTreeMap<TxnId, TxnStatus>,
}

/// Parse/validation failure, carrying the offending position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("syntax error at byte {at}: {what}")]
    Syntax { at: usize, what: String },
    #[error("op {op} at position {pos}: transaction {txn} already terminated")]
    OpAfterTerminal { pos: usize, txn: TxnId, op: String },
    #[error("position {pos}: transaction {txn} has more than one terminal op")]
    DuplicateTerminal { pos: usize, txn: TxnId },
    #[error("position {pos}: write version {got} on '{var}' (expected {expected})")]
    BadWriteVersion {
        pos: usize,
        var: String,
        got: Version,
        expected: Version,
    },
    #[error("position {pos}: read of '{var}' version {got}, which was never written")]
    BadReadVersion {
        pos: usize,
        var: String,
        got: Version,
    },
    #[error("position {pos}: transaction id must be >= 1")]
    ZeroTxn { pos: usize },
}

/// Parse-time knobs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept any strictly increasing write versions per variable rather
    /// than requiring exactly `previous max + 1`. Needed for fixtures whose
    /// source text carries version gaps.
    pub lax_versions: bool,
}

impl Schedule {
    /// Builds a schedule from ops, validating every structural invariant.
    pub fn new(ops: Vec<Op>, opts: ParseOptions) -> Result<Self, ScheduleError> {
        let mut s = Schedule::from_ops_unchecked(ops);
        s.validate(opts)?;
        Ok(s)
    }

    /// Builds a schedule without version validation. Terminal-op invariants
    /// still hold by construction in every internal caller; used for derived
    /// histories (e.g. committed projections) whose reads may reference
    /// writes that were projected away.
    pub fn from_ops_unchecked(mut ops: Vec<Op>) -> Self {
        for (i, op) in ops.iter_mut().enumerate() {
            op.pos = i;
        }
        let mut txns = BTreeSet::new();
        let mut vars = BTreeSet::new();
        let mut status = BTreeMap::new();
        for op in &ops {
            txns.insert(op.txn);
            if let Some(v) = op.action.var() {
                vars.insert(v.to_string());
            }
            match op.action {
                Action::Commit => {
                    status.insert(op.txn, TxnStatus::Committed { pos: op.pos });
                }
                Action::Abort => {
                    status.insert(op.txn, TxnStatus::Aborted { pos: op.pos });
                }
                _ => {
                    status.entry(op.txn).or_insert(TxnStatus::Undone);
                }
            }
        }
        Schedule {
            ops,
            txns,
            vars,
            status,
        }
    }

    fn validate(&mut self, opts: ParseOptions) -> Result<(), ScheduleError> {
        let mut terminated: BTreeMap<TxnId, usize> = BTreeMap::new();
        let mut max_written: BTreeMap<&str, Version> = BTreeMap::new();
        let mut written: BTreeMap<&str, BTreeSet<Version>> = BTreeMap::new();
        for op in &self.ops {
            if op.txn == 0 {
                return Err(ScheduleError::ZeroTxn { pos: op.pos });
            }
            if let Some(&t) = terminated.get(&op.txn) {
                let _ = t;
                if op.action.is_data() {
                    return Err(ScheduleError::OpAfterTerminal {
                        pos: op.pos,
                        txn: op.txn,
                        op: op.to_string(),
                    });
                }
                return Err(ScheduleError::DuplicateTerminal {
                    pos: op.pos,
                    txn: op.txn,
                });
            }
            match &op.action {
                Action::Write { var, version } => {
                    let prev = max_written.get(var.as_str()).copied();
                    let ok = if opts.lax_versions {
                        prev.map_or(true, |p| *version > p)
                    } else {
                        *version == prev.unwrap_or(0) + 1
                    };
                    if !ok {
                        return Err(ScheduleError::BadWriteVersion {
                            pos: op.pos,
                            var: var.clone(),
                            got: *version,
                            expected: prev.unwrap_or(0) + 1,
                        });
                    }
                    max_written.insert(var.as_str(), *version);
                    written.entry(var.as_str()).or_default().insert(*version);
                }
                Action::Read { var, version } => {
                    let seen = written
                        .get(var.as_str())
                        .map_or(false, |w| w.contains(version));
                    if *version != 0 && !seen {
                        return Err(ScheduleError::BadReadVersion {
                            pos: op.pos,
                            var: var.clone(),
                            got: *version,
                        });
                    }
                }
                Action::Commit | Action::Abort => {
                    terminated.insert(op.txn, op.pos);
                }
            }
        }
        Ok(())
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    /// T(s): the set of transactions appearing in the schedule.
    pub fn txns(&self) -> &BTreeSet<TxnId> {
        &self.txns
    }

    /// D(s): the set of variables appearing in the schedule.
    pub fn vars(&self) -> &BTreeSet<String> {
        &self.vars
    }

    pub fn status(&self, txn: TxnId) -> TxnStatus {
        self.status.get(&txn).copied().unwrap_or(TxnStatus::Undone)
    }

    pub fn statuses(&self) -> &BTreeMap<TxnId, TxnStatus> {
        &self.status
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    /// Canonical text with explicit versions; `parse(format(s)) == s`.
    pub fn format(&self) -> String {
        self.ops.iter().map(Op::to_string).collect()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

/// Parses one schedule. Whitespace-insensitive; `#` starts a comment.
pub fn parse(text: &str, opts: ParseOptions) -> Result<Schedule, ScheduleError> {
    let mut ops = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut pos = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            _ if b.is_ascii_whitespace() => i += 1,
            b'R' | b'W' | b'C' | b'A' => {
                let start = i;
                i += 1;
                skip_ws(bytes, &mut i);
                let txn = parse_int(bytes, &mut i).ok_or_else(|| ScheduleError::Syntax {
                    at: i,
                    what: format!("expected transaction id after '{}'", b as char),
                })?;
                if txn == 0 {
                    return Err(ScheduleError::ZeroTxn { pos });
                }
                let action = if b == b'C' || b == b'A' {
                    if b == b'C' {
                        Action::Commit
                    } else {
                        Action::Abort
                    }
                } else {
                    skip_ws(bytes, &mut i);
                    if i >= bytes.len() || bytes[i] != b'[' {
                        return Err(ScheduleError::Syntax {
                            at: i,
                            what: "expected '['".into(),
                        });
                    }
                    i += 1;
                    skip_ws(bytes, &mut i);
                    let (var, mut version) =
                        parse_var(bytes, &mut i).ok_or_else(|| ScheduleError::Syntax {
                            at: i,
                            what: "expected variable name ([a-z][a-z0-9_]*)".into(),
                        })?;
                    skip_ws(bytes, &mut i);
                    if version.is_none() {
                        version = parse_int(bytes, &mut i);
                        skip_ws(bytes, &mut i);
                    }
                    if i >= bytes.len() || bytes[i] != b']' {
                        return Err(ScheduleError::Syntax {
                            at: i,
                            what: "expected ']'".into(),
                        });
                    }
                    i += 1;
                    if b == b'R' {
                        Action::Read {
                            var,
                            // placeholder; inference below fills omitted versions
                            version: version.unwrap_or(Version::MAX),
                        }
                    } else {
                        Action::Write {
                            var,
                            version: version.unwrap_or(Version::MAX),
                        }
                    }
                };
                let _ = start;
                ops.push(Op { pos, txn, action });
                pos += 1;
            }
            _ => {
                return Err(ScheduleError::Syntax {
                    at: i,
                    what: format!("unexpected character '{}'", b as char),
                })
            }
        }
    }
    infer_versions(&mut ops);
    Schedule::new(ops, opts)
}

/// Splits file contents into schedule texts on blank lines, dropping
/// comments first so a comment-only line still separates.
pub fn split_schedules(text: &str) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        if line.trim().is_empty() {
            if !cur.trim().is_empty() {
                chunks.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    if !cur.trim().is_empty() {
        chunks.push(cur);
    }
    chunks
}

fn skip_ws(bytes: &[u8], i: &mut usize) {
    while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
        *i += 1;
    }
}

fn parse_int(bytes: &[u8], i: &mut usize) -> Option<u32> {
    let start = *i;
    while *i < bytes.len() && bytes[*i].is_ascii_digit() {
        *i += 1;
    }
    if *i == start {
        return None;
    }
    std::str::from_utf8(&bytes[start..*i]).ok()?.parse().ok()
}

/// Parses `var int?` where a trailing digit run belongs to the version:
/// `x0` is variable `x` at version 0, `foo12` is `foo` at version 12.
fn parse_var(bytes: &[u8], i: &mut usize) -> Option<(String, Option<u32>)> {
    if *i >= bytes.len() || !bytes[*i].is_ascii_lowercase() {
        return None;
    }
    let start = *i;
    *i += 1;
    while *i < bytes.len()
        && (bytes[*i].is_ascii_lowercase() || bytes[*i].is_ascii_digit() || bytes[*i] == b'_')
    {
        *i += 1;
    }
    let token = &bytes[start..*i];
    let split = token
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map(|p| p + 1)
        .unwrap_or(token.len());
    let var = String::from_utf8(token[..split].to_vec()).unwrap();
    let version = if split < token.len() {
        std::str::from_utf8(&token[split..]).ok()?.parse().ok()
    } else {
        None
    };
    Some((var, version))
}

/// Fills in omitted versions (marked `Version::MAX` by the parser): writes
/// get the next version of their variable, reads bind to the latest written
/// version so far, else 0.
fn infer_versions(ops: &mut [Op]) {
    let mut latest: BTreeMap<String, Version> = BTreeMap::new();
    for op in ops.iter_mut() {
        match &mut op.action {
            Action::Write { var, version } => {
                if *version == Version::MAX {
                    *version = latest.get(var.as_str()).copied().unwrap_or(0) + 1;
                }
                let e = latest.entry(var.clone()).or_insert(0);
                *e = (*e).max(*version);
            }
            Action::Read { var, version } => {
                if *version == Version::MAX {
                    *version = latest.get(var.as_str()).copied().unwrap_or(0);
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strict(text: &str) -> Schedule {
        parse(text, ParseOptions::default()).unwrap()
    }

    #[test]
    fn example_1_parses_verbatim_in_lax_mode() {
        // W2[x3] jumps the version sequence, so strict mode must reject it.
        let text = "W1[x0]W1[x1]W2[x3]R1[x3]C1C2";
        assert!(parse(text, ParseOptions::default()).is_err());
        let s = parse(text, ParseOptions { lax_versions: true }).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.txns().iter().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(s.vars().iter().cloned().collect::<Vec<_>>(), vec!["x"]);
    }

    #[test]
    fn empty_input_is_the_empty_schedule() {
        let s = strict("");
        assert!(s.is_empty());
        assert!(s.txns().is_empty());
        assert_eq!(s.format(), "");
    }

    #[test]
    fn version_inference_matches_hand_application() {
        // Hand-derived: R1 reads unwritten x -> 0; W2 writes max+1 = 1;
        // final R1 binds to the latest written version 1.
        let s = strict("R1[x] W2[x] C2 R1[x]");
        assert_eq!(s.format(), "R1[x0]W2[x1]C2R1[x1]");
        // Deterministic: parsing twice gives identical schedules.
        assert_eq!(s, strict("R1[x] W2[x] C2 R1[x]"));
    }

    #[test]
    fn example_3_formats_with_inferred_versions() {
        let s = strict("W1[x]R2[x]A1W2[y]C2R3[y]");
        assert_eq!(s.format(), "W1[x1]R2[x1]A1W2[y1]C2R3[y1]");
    }

    #[test]
    fn figure_10_k_round_trips_identically() {
        let text = "R1[x0]W2[x1]C2W1[x2]";
        let s = strict(text);
        assert_eq!(s.format(), text);
        assert_eq!(parse(&s.format(), ParseOptions::default()).unwrap(), s);
    }

    #[test]
    fn op_after_terminal_is_rejected() {
        let err = parse("R1[x0]C1W1[y1]", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, ScheduleError::OpAfterTerminal { txn: 1, .. }));
        let err = parse("C1A1", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, ScheduleError::DuplicateTerminal { txn: 1, .. }));
    }

    #[test]
    fn read_of_nonexistent_version_is_rejected() {
        let err = parse("R1[x2]", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, ScheduleError::BadReadVersion { got: 2, .. }));
        // Reading an existing non-latest version is fine (time-travel reads
        // appear all over the figures).
        assert!(parse("W1[x1]C1W2[x2]R3[x1]", ParseOptions::default()).is_ok());
    }

    #[test]
    fn strict_mode_requires_dense_versions_from_one() {
        // Example 1 opens with W1[x0]; only lax mode accepts that.
        assert!(parse("W1[x0]", ParseOptions::default()).is_err());
        assert!(parse("W1[x2]", ParseOptions::default()).is_err());
        assert!(parse("W1[x0]", ParseOptions { lax_versions: true }).is_ok());
    }

    #[test]
    fn undone_transactions_are_valid() {
        let s = strict("W1[x1]R2[x1]");
        assert_eq!(s.status(1), TxnStatus::Undone);
        assert_eq!(s.status(2), TxnStatus::Undone);
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let s = strict("R1 [ x ] # first read\n W2[x1] C2 R1[x1]");
        assert_eq!(s.format(), "R1[x0]W2[x1]C2R1[x1]");
    }

    #[test]
    fn malformed_inputs_report_position() {
        for bad in ["R1[x", "R1", "Rx", "W1[X]", "Q1", "R0[x0]"] {
            assert!(parse(bad, ParseOptions::default()).is_err(), "{bad}");
        }
    }

    #[test]
    fn split_schedules_on_blank_lines() {
        let text = "R1[x0]C1\n\n# comment only\nW1[x1]\nC1\n\n";
        let parts = split_schedules(text);
        assert_eq!(parts.len(), 2);
        assert_eq!(strict(&parts[0]).format(), "R1[x0]C1");
        assert_eq!(strict(&parts[1]).format(), "W1[x1]C1");
    }
}
