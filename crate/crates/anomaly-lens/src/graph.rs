//! Partial-order-pair graph construction, cycle detection, canonical cycle
//! selection, single-variable cycle reduction, PG equivalence, and DOT
//! export.
//!
//! Self-cycle kinds (WRA/WWC/WWA) are stored as one forward edge plus a
//! notational back edge, so each constitutes a two-transaction cycle on its
//! own. The back edge never participates in longer cycles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::pops::{pops, pops_with, PopEdge, PopsOptions};
use crate::schedule::{Schedule, TxnId};

/// Directed multigraph over transactions with POP edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopGraph {
    pub vertices: BTreeSet<TxnId>,
    pub edges: Vec<PopEdge>,
}

/// A directed simple cycle of POP edges over distinct transactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    pub edges: Vec<PopEdge>,
    /// Number of distinct variables (the paper's N_D).
    pub n_vars: usize,
    /// Number of distinct transactions (the paper's N_T).
    pub n_txns: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("reduction requires a single-variable cycle over >= 3 transactions (got {n_vars} vars, {n_txns} txns)")]
    NotReducible { n_vars: usize, n_txns: usize },
    #[error("no 2-transaction cycle exists on variable '{var}'")]
    NoTwoCycle { var: String },
}

/// Result of cycle enumeration; `truncated` is set when `limit` was hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSet {
    pub cycles: Vec<Cycle>,
    pub truncated: bool,
}

pub const DEFAULT_CYCLE_LIMIT: usize = 10_000;

impl Cycle {
    fn new(edges: Vec<PopEdge>) -> Self {
        let n_vars = edges.iter().map(|e| e.var.as_str()).collect::<BTreeSet<_>>().len();
        let n_txns = edges.iter().map(|e| e.from).collect::<BTreeSet<_>>().len();
        Cycle {
            edges,
            n_vars,
            n_txns,
        }
    }

    /// Rotates the edge list so it starts at the smallest transaction id.
    fn normalize(mut self) -> Self {
        let min = self.edges.iter().map(|e| e.from).min().unwrap();
        let at = self.edges.iter().position(|e| e.from == min).unwrap();
        self.edges.rotate_left(at);
        self
    }

    pub fn max_anchor(&self) -> usize {
        self.edges
            .iter()
            .flat_map(|e| e.anchors.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Number of distinct operations anchoring the cycle's edges. Cycles
    /// that reuse one op across several POPs involve fewer operations.
    pub fn distinct_ops(&self) -> usize {
        self.edges
            .iter()
            .flat_map(|e| e.anchors.iter().copied())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Total order used everywhere a cycle must be chosen deterministically:
    /// fewest edges, then fewest distinct operations (the first-come cycle
    /// reuses early ops instead of reaching for later ones), then earliest
    /// completion, then lexicographic.
    pub fn sort_key(&self) -> CycleKey {
        (
            self.edges.len(),
            self.distinct_ops(),
            self.max_anchor(),
            self.edges
                .iter()
                .map(|e| (e.from, e.kind, e.var.clone(), e.to, e.implicit_back))
                .collect(),
            self.edges.iter().map(|e| e.anchors.clone()).collect(),
        )
    }

    pub fn txns(&self) -> BTreeSet<TxnId> {
        self.edges.iter().map(|e| e.from).collect()
    }

    /// Symbolic rendering, e.g. `(R1W2[x]), (W2R3[x]), (W3R1[z])`.
    pub fn symbol(&self, s: &Schedule) -> String {
        self.edges
            .iter()
            .map(|e| format!("({})", e.symbol(s)))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub type CycleKey = (
    usize,
    usize,
    usize,
    Vec<(TxnId, crate::pops::PopKind, String, TxnId, bool)>,
    Vec<Vec<usize>>,
);

/// Builds the PG from a POP set plus the full transaction set.
pub fn build_pg(mut pop_edges: Vec<PopEdge>, txns: &BTreeSet<TxnId>) -> PopGraph {
    pop_edges.sort_by(|a, b| {
        (a.from, a.to, &a.var, a.kind, &a.anchors).cmp(&(b.from, b.to, &b.var, b.kind, &b.anchors))
    });
    let mut vertices: BTreeSet<TxnId> = txns.clone();
    vertices.extend(pop_edges.iter().flat_map(|e| [e.from, e.to]));
    PopGraph {
        vertices,
        edges: pop_edges,
    }
}

fn implicit_back(e: &PopEdge) -> PopEdge {
    PopEdge {
        from: e.to,
        to: e.from,
        var: e.var.clone(),
        kind: e.kind,
        anchors: e.anchors.clone(),
        implicit_back: true,
    }
}

/// Enumerates all directed simple cycles, including the 2-cycles induced by
/// self-cycle POPs, normalized and sorted by `Cycle::sort_key`.
pub fn find_cycles(g: &PopGraph, limit: usize) -> CycleSet {
    let mut cycles = Vec::new();
    let mut truncated = false;

    // Each self-cycle edge forms its own 2-cycle with a notational back edge.
    for e in &g.edges {
        if e.kind.is_self_cycle() {
            if cycles.len() >= limit {
                truncated = true;
                break;
            }
            cycles.push(Cycle::new(vec![e.clone(), implicit_back(e)]).normalize());
        }
    }

    // DFS rooted at each vertex, visiting only vertices >= the root so each
    // cycle is found exactly once, rooted at its minimum transaction.
    let mut by_from: BTreeMap<TxnId, Vec<&PopEdge>> = BTreeMap::new();
    for e in &g.edges {
        by_from.entry(e.from).or_default().push(e);
    }
    'roots: for &root in &g.vertices {
        let mut path: Vec<&PopEdge> = Vec::new();
        let mut on_path: BTreeSet<TxnId> = BTreeSet::new();
        // stack of (vertex, next edge index to try)
        let mut stack: Vec<(TxnId, usize)> = vec![(root, 0)];
        on_path.insert(root);
        while let Some(&mut (v, ref mut idx)) = stack.last_mut() {
            let edges_v = by_from.get(&v).map(Vec::as_slice).unwrap_or(&[]);
            if *idx >= edges_v.len() {
                stack.pop();
                on_path.remove(&v);
                path.pop();
                continue;
            }
            let e = edges_v[*idx];
            *idx += 1;
            if e.to == root {
                if !path.is_empty() {
                    if cycles.len() >= limit {
                        truncated = true;
                        break 'roots;
                    }
                    let mut edges: Vec<PopEdge> = path.iter().map(|&p| p.clone()).collect();
                    edges.push(e.clone());
                    cycles.push(Cycle::new(edges).normalize());
                }
            } else if e.to > root && !on_path.contains(&e.to) {
                path.push(e);
                on_path.insert(e.to);
                stack.push((e.to, 0));
            }
        }
    }

    cycles.sort_by_cached_key(Cycle::sort_key);
    cycles.dedup();
    CycleSet { cycles, truncated }
}

/// The anomaly cycle: fewest edges, fewest distinct ops, earliest
/// completion, lexicographic.
pub fn canonical_cycle(cycles: &[Cycle]) -> Option<Cycle> {
    cycles.iter().min_by_key(|c| c.sort_key()).cloned()
}

/// Convenience: pops -> graph -> cycles for one schedule.
pub fn cycles_of(s: &Schedule, opts: PopsOptions, limit: usize) -> CycleSet {
    find_cycles(&build_pg(pops_with(s, opts), s.txns()), limit)
}

/// Reduces a single-variable cycle over >= 3 transactions to a
/// 2-transaction cycle present in `pops(s)`, following the theorem proofs:
/// a self-cycle edge reduces immediately, otherwise the ordering of the
/// first ops decides which transaction pair closes the cycle. Abort
/// interleavings the proofs gloss over fall back to the canonical least
/// 2-cycle on the variable.
pub fn reduce_single_var_cycle(c: &Cycle, s: &Schedule) -> Result<Cycle, GraphError> {
    if c.n_vars != 1 || c.n_txns < 3 {
        return Err(GraphError::NotReducible {
            n_vars: c.n_vars,
            n_txns: c.n_txns,
        });
    }
    let var = c.edges[0].var.clone();
    let edges_on_var: Vec<PopEdge> = pops(s).into_iter().filter(|e| e.var == var).collect();
    let lookup = |from: TxnId, to: TxnId| -> Option<&PopEdge> {
        edges_on_var
            .iter()
            .filter(|e| e.from == from && e.to == to)
            .min_by_key(|e| (e.kind, e.anchors.clone()))
    };
    let two_cycle = |a: &PopEdge, b: &PopEdge| Cycle::new(vec![a.clone(), b.clone()]).normalize();

    let mut cur: Vec<PopEdge> = c.edges.clone();
    while cur.len() > 2 {
        // Any self-cycle POP is itself a 2-transaction PCG.
        if let Some(e) = cur.iter().find(|e| e.kind.is_self_cycle()) {
            return Ok(Cycle::new(vec![e.clone(), implicit_back(e)]).normalize());
        }
        let n = cur.len();
        let first_op_pos = |e: &PopEdge| e.anchors[0];
        let p1 = &cur[0];
        let p1_is_write = matches!(
            s.ops()[p1.anchors[0]].action,
            crate::schedule::Action::Write { .. }
        );
        let next = if p1_is_write {
            // Case (1): compare p_1 with p_{n-1}.
            if first_op_pos(p1) < first_op_pos(&cur[n - 2]) {
                // p_1 precedes p_{n-1} <= q_n, so (p_1, q_n) conflicts; with
                // the last edge (p_n, q_1) that closes a 2-cycle.
                match lookup(p1.from, cur[n - 1].from) {
                    Some(e) => return Ok(two_cycle(e, &cur[n - 1])),
                    None => None,
                }
            } else {
                // p_{n-1} precedes p_1 < q_2: shortcut v_{n-1} -> v_2.
                lookup(cur[n - 2].from, cur[1].from).map(|e| {
                    let mut next: Vec<PopEdge> = vec![e.clone()];
                    next.extend(cur[1..n - 2].iter().cloned());
                    next
                })
            }
        } else {
            // Case (2): p_1 is a read, so q_2 = W_2; compare p_2 with p_n.
            if first_op_pos(&cur[1]) < first_op_pos(&cur[n - 1]) {
                // p_2 precedes p_n <= q_1: (p_2, q_1) with (p_1, q_2).
                match lookup(cur[1].from, p1.from) {
                    Some(e) => return Ok(two_cycle(&cur[0], e)),
                    None => None,
                }
            } else {
                // p_n precedes p_2: drop t_1, shortcut v_n -> v_2.
                lookup(cur[n - 1].from, cur[1].from).map(|e| {
                    let mut next: Vec<PopEdge> = vec![e.clone()];
                    next.extend(cur[1..n - 1].iter().cloned());
                    next
                })
            }
        };
        match next {
            Some(next) if next.len() < cur.len() => cur = next,
            _ => break, // claimed pair was inert; fall back below
        }
    }
    if cur.len() == 2 {
        return Ok(Cycle::new(cur).normalize());
    }
    // Fallback: deterministically least 2-cycle on the variable.
    let g = build_pg(edges_on_var.clone(), &c.txns());
    find_cycles(&g, DEFAULT_CYCLE_LIMIT)
        .cycles
        .into_iter()
        .filter(|cy| cy.n_txns == 2)
        .min_by_key(Cycle::sort_key)
        .ok_or(GraphError::NoTwoCycle { var })
}

/// Definition-9 equivalence: same op multiset and same POP set compared on
/// `(from, to, var, kind)`.
pub fn pg_equivalent(s1: &Schedule, s2: &Schedule) -> bool {
    let sig = |s: &Schedule| {
        let mut ops: Vec<_> = s.ops().iter().map(|o| (o.txn, o.action.clone())).collect();
        ops.sort();
        let edges: BTreeSet<_> = pops(s)
            .into_iter()
            .map(|e| (e.from, e.to, e.var, e.kind))
            .collect();
        (ops, edges)
    };
    sig(s1) == sig(s2)
}

/// Deterministic Graphviz rendering; `highlight` edges are drawn bold red,
/// implicit self-cycle back edges dashed.
pub fn to_dot(g: &PopGraph, highlight: Option<&Cycle>) -> String {
    let is_highlighted = |e: &PopEdge| {
        highlight
            .map(|c| c.edges.iter().any(|h| h == e))
            .unwrap_or(false)
    };
    let mut out = String::from("digraph pg {\n");
    out.push_str("  rankdir=LR;\n");
    for v in &g.vertices {
        let _ = writeln!(out, "  t{v};");
    }
    let mut all: Vec<PopEdge> = g.edges.clone();
    for e in &g.edges {
        if e.kind.is_self_cycle() {
            all.push(implicit_back(e));
        }
    }
    for e in &all {
        let mut attrs = vec![format!("label=\"{}\"", e.label())];
        if e.implicit_back {
            attrs.push("style=dashed".into());
        }
        if is_highlighted(e) {
            attrs.push("color=red".into());
            attrs.push("penwidth=2".into());
        }
        let _ = writeln!(out, "  t{} -> t{} [{}];", e.from, e.to, attrs.join(", "));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pops::PopKind;
    use crate::schedule::{parse, ParseOptions};

    fn sched(text: &str) -> Schedule {
        parse(text, ParseOptions::default()).unwrap()
    }

    fn graph_of(s: &Schedule) -> PopGraph {
        build_pg(pops(s), s.txns())
    }

    #[test]
    fn example_3_graph_shape() {
        let s = sched("W1[x]R2[x]A1W2[y]C2R3[y]");
        let g = graph_of(&s);
        assert_eq!(g.vertices.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.edges[0].kind, PopKind::WRA);
        assert_eq!(g.edges[1].kind, PopKind::WCR);
        // The WRA edge alone yields a 2-cycle through its implicit back edge.
        let cs = find_cycles(&g, DEFAULT_CYCLE_LIMIT);
        assert_eq!(cs.cycles.len(), 1);
        assert_eq!(cs.cycles[0].edges.len(), 2);
        assert!(cs.cycles[0].edges[1].implicit_back);
    }

    #[test]
    fn empty_pops_single_vertex() {
        let s = sched("R1[x0]C1");
        let g = graph_of(&s);
        assert_eq!(g.vertices.len(), 1);
        assert!(g.edges.is_empty());
        assert!(find_cycles(&g, 10).cycles.is_empty());
    }

    #[test]
    fn example_4_graph_and_canonical_cycle() {
        let s = sched("R1[x0]W2[x1]W2[y1]W3[y2]W3[z1]R1[z1]R3[x1]W4[x2]");
        let g = graph_of(&s);
        assert_eq!(g.vertices.len(), 4);
        assert_eq!(g.edges.len(), 7);
        let cs = find_cycles(&g, DEFAULT_CYCLE_LIMIT);
        assert!(!cs.truncated);
        let best = canonical_cycle(&cs.cycles).unwrap();
        assert_eq!(best.symbol(&s), "(R1W2[x]), (W2R3[x]), (W3R1[z])");
        assert_eq!(best.n_txns, 3);
        assert_eq!(best.n_vars, 2);
    }

    #[test]
    fn serial_schedule_is_acyclic() {
        let s = sched("R1[x0]C1W2[x1]C2");
        assert!(cycles_of(&s, PopsOptions::default(), 100).cycles.is_empty());
    }

    #[test]
    fn figure_2_wra_two_cycle() {
        let s = sched("W1[x1]R2[x1]A1");
        let cs = cycles_of(&s, PopsOptions::default(), 100);
        assert_eq!(cs.cycles.len(), 1);
        assert_eq!(cs.cycles[0].edges[0].kind, PopKind::WRA);
    }

    #[test]
    fn canonical_prefers_fewer_edges_then_earliest_completion() {
        // Two disjoint 2-cycles; the one completing earlier wins.
        let s = sched("R1[x0]W2[x1]R1[x1]R3[y0]W4[y1]R3[y1]");
        let cs = cycles_of(&s, PopsOptions::default(), 100);
        assert_eq!(cs.cycles.len(), 2);
        let best = canonical_cycle(&cs.cycles).unwrap();
        assert_eq!(best.txns(), [1, 2].into_iter().collect());
        assert_eq!(best.max_anchor(), 2);
        // Permutation invariance.
        let mut rev = cs.cycles.clone();
        rev.reverse();
        assert_eq!(canonical_cycle(&rev), Some(best));
    }

    #[test]
    fn pg_equivalence_examples() {
        let a = sched("W1[x]R2[x]A1W2[y]C2R3[y]");
        assert!(pg_equivalent(&a, &a));
        // Swapping A1 and W2[y1] preserves ops and POPs.
        let b = sched("W1[x]R2[x]W2[y]A1C2R3[y]");
        assert!(pg_equivalent(&a, &b));
        let c = sched("R1[x0]W2[x1]R1[x1]");
        let d = sched("R1[x0]R1[x0]W2[x1]");
        assert!(!pg_equivalent(&c, &d));
    }

    #[test]
    fn pg_equivalence_is_symmetric_and_transitive_on_samples() {
        let texts = [
            "W1[x]R2[x]A1W2[y]C2R3[y]",
            "W1[x]R2[x]W2[y]A1C2R3[y]",
            "R1[x0]W2[x1]R1[x1]",
        ];
        for a in &texts {
            for b in &texts {
                let (sa, sb) = (sched(a), sched(b));
                assert_eq!(pg_equivalent(&sa, &sb), pg_equivalent(&sb, &sa));
                for c in &texts {
                    let sc = sched(c);
                    if pg_equivalent(&sa, &sb) && pg_equivalent(&sb, &sc) {
                        assert!(pg_equivalent(&sa, &sc));
                    }
                }
            }
        }
    }

    #[test]
    fn reduce_three_txn_single_var_cycle() {
        // 3-cycle t1 -> t2 -> t3 -> t1 on x, plus the 2-cycle the theorem
        // guarantees.
        let s = sched("R1[x0]W2[x1]R3[x1]W1[x2]");
        let cs = cycles_of(&s, PopsOptions::default(), 100);
        let three = cs.cycles.iter().find(|c| c.n_txns == 3).unwrap();
        let two = reduce_single_var_cycle(three, &s).unwrap();
        assert_eq!(two.n_txns, 2);
        assert_eq!(two.n_vars, 1);
        assert!(cs.cycles.contains(&two));
    }

    #[test]
    fn reduce_five_txn_single_var_cycle() {
        // t1..t5 chained reads/writes closing back at t1.
        let s = sched("R1[x0]W2[x1]R3[x1]W4[x2]R5[x2]W1[x3]");
        let cs = cycles_of(&s, PopsOptions::default(), 1000);
        let five = cs.cycles.iter().find(|c| c.n_txns == 5);
        if let Some(five) = five {
            let two = reduce_single_var_cycle(five, &s).unwrap();
            assert_eq!(two.n_txns, 2);
            assert!(cs.cycles.contains(&two));
        } else {
            panic!("expected a 5-transaction cycle");
        }
    }

    #[test]
    fn reduce_rejects_wrong_preconditions() {
        let s = sched("R1[x0]W2[x1]R1[x1]");
        let cs = cycles_of(&s, PopsOptions::default(), 100);
        let two = &cs.cycles[0];
        assert!(matches!(
            reduce_single_var_cycle(two, &s),
            Err(GraphError::NotReducible { .. })
        ));
    }

    #[test]
    fn dot_output() {
        let empty = build_pg(vec![], &BTreeSet::new());
        assert_eq!(to_dot(&empty, None), "digraph pg {\n  rankdir=LR;\n}\n");

        let s = sched("W1[x]R2[x]A1W2[y]C2R3[y]");
        let g = graph_of(&s);
        let dot = to_dot(&g, None);
        assert!(dot.contains("WRA[x]"));
        assert!(dot.contains("WCR[y]"));
        assert!(dot.contains("style=dashed"));

        let s4 = sched("R1[x0]W2[x1]W2[y1]W3[y2]W3[z1]R1[z1]R3[x1]W4[x2]");
        let g4 = graph_of(&s4);
        let cs = find_cycles(&g4, DEFAULT_CYCLE_LIMIT);
        let best = canonical_cycle(&cs.cycles).unwrap();
        let dot = to_dot(&g4, Some(&best));
        assert_eq!(dot.matches("color=red").count(), 3);
    }

    #[test]
    fn cycle_limit_sets_truncated_flag() {
        let s = sched("R1[x0]W2[x1]W2[y1]W3[y2]W3[z1]R1[z1]R3[x1]W4[x2]");
        let cs = cycles_of(&s, PopsOptions::default(), 1);
        assert!(cs.truncated);
        assert_eq!(cs.cycles.len(), 1);
    }
}
