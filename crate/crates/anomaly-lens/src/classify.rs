//! Cycle classification: class (WAT/RAT/IAT), subclass (SDA/DDA/MDA), and
//! the anomaly name, plus the write-write status truth table.
//!
//! Class is decided by the kind multiset alone: a cycle with an uncommitted
//! double-write kind (WW/WWC/WWA) is WAT; otherwise one with an uncommitted
//! write-read kind (WR/WRA) is RAT; everything else (RW and the
//! commit-prefixed kinds) is IAT. Subclass is the cycle footprint
//! `(N_D, N_T)`: (1,2) SDA, (2,2) DDA, anything larger MDA.
//!
//! Names for two-transaction cycles come from the kind-pair tables compiled
//! out of the single- and double-variable double-edge enumerations; MDA
//! cycles are named Step WAT/RAT/IAT.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_pg, canonical_cycle, find_cycles, Cycle, DEFAULT_CYCLE_LIMIT};
use crate::pops::{pops_with, PopEdge, PopKind, PopsOptions};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyClass {
    WAT,
    RAT,
    IAT,
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyClass::WAT => "WAT",
            AnomalyClass::RAT => "RAT",
            AnomalyClass::IAT => "IAT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalySubclass {
    SDA,
    DDA,
    MDA,
}

impl fmt::Display for AnomalySubclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalySubclass::SDA => "SDA",
            AnomalySubclass::DDA => "DDA",
            AnomalySubclass::MDA => "MDA",
        })
    }
}

macro_rules! anomaly_names {
    ($( $variant:ident => ($name:expr, $class:ident, $sub:ident, $expr:expr) ),+ $(,)?) => {
        /// The 29 anomaly names of the classification table.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum AnomalyName {
            $( $variant ),+
        }

        impl AnomalyName {
            pub const ALL: &'static [AnomalyName] = &[ $( AnomalyName::$variant ),+ ];

            pub fn as_str(self) -> &'static str {
                match self { $( AnomalyName::$variant => $name ),+ }
            }

            pub fn class(self) -> AnomalyClass {
                match self { $( AnomalyName::$variant => AnomalyClass::$class ),+ }
            }

            pub fn subclass(self) -> AnomalySubclass {
                match self { $( AnomalyName::$variant => AnomalySubclass::$sub ),+ }
            }

            /// Formal expression pattern from the classification table.
            pub fn formal_expression(self) -> &'static str {
                match self { $( AnomalyName::$variant => $expr ),+ }
            }
        }

        impl FromStr for AnomalyName {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                match s {
                    $( $name => Ok(AnomalyName::$variant), )+
                    _ => Err(()),
                }
            }
        }
    };
}

anomaly_names! {
    DirtyWrite => ("Dirty Write", WAT, SDA, "Wi[xm]...Wj[xm+1]...Ai/Ci"),
    LostSelfUpdateCommitted => ("Lost Self Update Committed", WAT, SDA, "Wi[xm]...Wj[xm+1]...Cj...Ri[xm+1]"),
    FullWriteCommitted => ("Full-Write Committed", WAT, SDA, "Wi[xm]...Wj[xm+1]...Cj...Wi[xm+2]"),
    FullWrite => ("Full-Write", WAT, SDA, "Wi[xm]...Wj[xm+1]...Wi[xm+2]"),
    LostUpdate => ("Lost Update", WAT, SDA, "Ri[xm]...Wj[xm+1]...Wi[xm+2]"),
    LostSelfUpdate => ("Lost Self Update", WAT, SDA, "Wi[xm]...Wj[xm+1]...Ri[xm+1]"),
    DoubleWriteSkew2Committed => ("Double-Write Skew 2 Committed", WAT, DDA, "Wi[xm]...Wj[xm+1]...Wj[yn]...Cj...Ri[yn]"),
    FullWriteSkewCommitted => ("Full-Write Skew Committed", WAT, DDA, "Wi[xm]...Wj[xm+1]...Wj[yn]...Cj...Wi[yn+1]"),
    FullWriteSkew => ("Full-Write Skew", WAT, DDA, "Wi[xm]...Wj[xm+1]...Wj[yn]...Wi[yn+1]"),
    DoubleWriteSkew1 => ("Double-Write Skew 1", WAT, DDA, "Wi[xm]...Rj[xm]...Wj[yn]...Wi[yn+1]"),
    DoubleWriteSkew2 => ("Double-Write Skew 2", WAT, DDA, "Wi[xm]...Wj[xm+1]...Wj[yn]...Ri[yn]"),
    ReadWriteSkew1 => ("Read-Write Skew 1", WAT, DDA, "Ri[xm]...Wj[xm+1]...Wj[yn]...Wi[yn+1]"),
    ReadWriteSkew2 => ("Read-Write Skew 2", WAT, DDA, "Wi[xm]...Wj[xm+1]...Rj[yn]...Wi[yn+1]"),
    StepWat => ("Step WAT", WAT, MDA, "...Wi/j[xm]...Wj/i[xm+1]... with N_D >= 3 or N_T >= 3"),
    DirtyRead => ("Dirty Read", RAT, SDA, "Wi[xm]...Rj[xm]...Ai"),
    NonRepeatableRead => ("Non-repeatable Read", RAT, SDA, "Ri[xm]...Wj[xm+1]...Ri[xm+1]"),
    IntermediateRead => ("Intermediate Read", RAT, SDA, "Wi[xm]...Rj[xm]...Wi[xm+1]"),
    WriteReadSkewCommitted => ("Write-Read Skew Committed", RAT, DDA, "Wi[xm]...Rj[xm]...Wj[yn]...Cj...Ri[yn]"),
    DoubleWriteSkew1Committed => ("Double-Write Skew 1 Committed", RAT, DDA, "Wi[xm]...Rj[xm]...Wj[yn]...Cj...Wi[yn+1]"),
    WriteReadSkew => ("Write-Read Skew", RAT, DDA, "Wi[xm]...Rj[xm]...Wj[yn]...Ri[yn]"),
    ReadSkew => ("Read Skew", RAT, DDA, "Ri[xm]...Wj[xm+1]...Wj[yn]...Ri[yn]"),
    ReadSkew2 => ("Read Skew 2", RAT, DDA, "Wi[xm]...Rj[xm]...Rj[yn]...Wi[yn+1]"),
    StepRat => ("Step RAT", RAT, MDA, "no WW, exists Wi/j[xm]...Rj/i[xm], N_D >= 3 or N_T >= 3"),
    NonRepeatableReadCommitted => ("Non-repeatable Read Committed", IAT, SDA, "Ri[xm]...Wj[xm+1]...Cj...Ri[xm+1]"),
    LostUpdateCommitted => ("Lost Update Committed", IAT, SDA, "Ri[xm]...Wj[xm+1]...Cj...Wi[xm+2]"),
    ReadSkewCommitted => ("Read Skew Committed", IAT, DDA, "Ri[xm]...Wj[xm+1]...Wj[yn]...Cj...Ri[yn]"),
    ReadWriteSkew1Committed => ("Read-Write Skew 1 Committed", IAT, DDA, "Ri[xm]...Wj[xm+1]...Wj[yn]...Cj...Wi[yn+1]"),
    WriteSkew => ("Write Skew", IAT, DDA, "Ri[xm]...Wj[xm+1]...Rj[yn]...Wi[yn+1]"),
    StepIat => ("Step IAT", IAT, MDA, "no WW and no WR, N_D >= 3 or N_T >= 3"),
}

impl fmt::Display for AnomalyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for AnomalyName {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AnomalyName {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        AnomalyName::from_str(&s)
            .map_err(|()| serde::de::Error::custom(format!("unknown anomaly name '{s}'")))
    }
}

/// A classified canonical cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnomalyReport {
    pub cycle: Cycle,
    pub class: AnomalyClass,
    pub subclass: AnomalySubclass,
    pub name: AnomalyName,
    pub formal_expression: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("no kind-pair table entry for ({fwd}, {back}) {subclass}; the double-edge enumeration should cover every reachable pair")]
    UnmatchedCombination {
        fwd: PopKind,
        back: PopKind,
        subclass: AnomalySubclass,
    },
}

/// Name lookup for a two-transaction cycle given the first-actor-oriented
/// kind pair. Forward kinds are always base kinds: commit-prefixed kinds
/// cannot come first (the other transaction would have no later op to pair
/// back), and self-cycle kinds are named before this table is consulted.
fn pair_name(
    fwd: PopKind,
    back: PopKind,
    subclass: AnomalySubclass,
) -> Option<AnomalyName> {
    use AnomalyName::*;
    use PopKind::*;
    let sda = subclass == AnomalySubclass::SDA;
    let name = match (fwd, back) {
        (WW, WW) => if sda { FullWrite } else { FullWriteSkew },
        (WW, WR) => if sda { LostSelfUpdate } else { DoubleWriteSkew2 },
        (WW, RW) => if sda { FullWrite } else { ReadWriteSkew2 },
        (WW, WCR) => if sda { LostSelfUpdateCommitted } else { DoubleWriteSkew2Committed },
        (WW, WCW) => if sda { FullWriteCommitted } else { FullWriteSkewCommitted },
        (WW, RCW) => if sda { FullWriteCommitted } else { ReadWriteSkew2 },
        (WR, WW) => if sda { FullWrite } else { DoubleWriteSkew1 },
        (WR, WR) => if sda { LostSelfUpdate } else { WriteReadSkew },
        (WR, RW) => if sda { IntermediateRead } else { ReadSkew2 },
        (WR, WCR) => if sda { LostSelfUpdateCommitted } else { WriteReadSkewCommitted },
        (WR, WCW) => if sda { FullWriteCommitted } else { DoubleWriteSkew1Committed },
        (WR, RCW) => if sda { IntermediateRead } else { ReadSkew2 },
        (RW, WW) => if sda { LostUpdate } else { ReadWriteSkew1 },
        (RW, WR) => if sda { NonRepeatableRead } else { ReadSkew },
        (RW, RW) => if sda { LostUpdate } else { WriteSkew },
        (RW, WCR) => if sda { NonRepeatableReadCommitted } else { ReadSkewCommitted },
        (RW, WCW) => if sda { LostUpdateCommitted } else { ReadWriteSkew1Committed },
        (RW, RCW) => if sda { LostUpdateCommitted } else { WriteSkew },
        _ => return None,
    };
    Some(name)
}

fn class_of(c: &Cycle) -> AnomalyClass {
    if c.edges.iter().any(|e| e.kind.is_double_write()) {
        AnomalyClass::WAT
    } else if c.edges.iter().any(|e| e.kind.is_write_read()) {
        AnomalyClass::RAT
    } else {
        AnomalyClass::IAT
    }
}

fn subclass_of(c: &Cycle) -> AnomalySubclass {
    match (c.n_vars, c.n_txns) {
        (1, 2) => AnomalySubclass::SDA,
        (2, 2) => AnomalySubclass::DDA,
        _ => AnomalySubclass::MDA,
    }
}

/// Assigns class, subclass, and name to a canonical cycle.
pub fn classify_cycle(c: &Cycle) -> Result<AnomalyReport, ClassifyError> {
    let class = class_of(c);
    let subclass = subclass_of(c);
    let name = match subclass {
        AnomalySubclass::MDA => match class {
            AnomalyClass::WAT => AnomalyName::StepWat,
            AnomalyClass::RAT => AnomalyName::StepRat,
            AnomalyClass::IAT => AnomalyName::StepIat,
        },
        _ => {
            // Self-cycle kinds name the cycle directly: Dirty Write for the
            // double-write ones, Dirty Read for WRA.
            if c.edges
                .iter()
                .any(|e| matches!(e.kind, PopKind::WWC | PopKind::WWA))
            {
                AnomalyName::DirtyWrite
            } else if c.edges.iter().any(|e| e.kind == PopKind::WRA) {
                AnomalyName::DirtyRead
            } else {
                // Orient by first actor: the edge holding the earliest op.
                let min_anchor = |e: &PopEdge| e.anchors.iter().copied().min().unwrap();
                let (fwd, back) = if min_anchor(&c.edges[0]) < min_anchor(&c.edges[1]) {
                    (&c.edges[0], &c.edges[1])
                } else {
                    (&c.edges[1], &c.edges[0])
                };
                pair_name(fwd.kind, back.kind, subclass)
                    .or_else(|| pair_name(back.kind, fwd.kind, subclass))
                    .ok_or(ClassifyError::UnmatchedCombination {
                        fwd: fwd.kind,
                        back: back.kind,
                        subclass,
                    })?
            }
        }
    };
    Ok(AnomalyReport {
        cycle: c.clone(),
        class,
        subclass,
        name,
        formal_expression: name.formal_expression(),
    })
}

/// Outcome of classifying a whole schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// No cycle; carries the acyclic POP set.
    Clean { pops: Vec<PopEdge> },
    Anomalous(AnomalyReport),
}

impl Verdict {
    pub fn is_clean(&self) -> bool {
        matches!(self, Verdict::Clean { .. })
    }

    pub fn report(&self) -> Option<&AnomalyReport> {
        match self {
            Verdict::Anomalous(r) => Some(r),
            Verdict::Clean { .. } => None,
        }
    }
}

/// Full pipeline: pops -> graph -> cycles -> canonical cycle -> report.
pub fn classify_schedule(s: &Schedule) -> Result<Verdict, ClassifyError> {
    classify_schedule_with(s, PopsOptions::default(), DEFAULT_CYCLE_LIMIT)
}

pub fn classify_schedule_with(
    s: &Schedule,
    opts: PopsOptions,
    limit: usize,
) -> Result<Verdict, ClassifyError> {
    let edges = pops_with(s, opts);
    let g = build_pg(edges, s.txns());
    let cycles = find_cycles(&g, limit);
    match canonical_cycle(&cycles.cycles) {
        Some(c) => Ok(Verdict::Anomalous(classify_cycle(&c)?)),
        None => Ok(Verdict::Clean { pops: g.edges }),
    }
}

/// The eight terminal orderings after `W_i[x1] ... W_j[x2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WwOrdering {
    CiThenCj,
    CiThenAj,
    AiThenCj,
    AiThenAj,
    CjThenCi,
    CjThenAi,
    AjThenCi,
    AjThenAi,
}

impl WwOrdering {
    pub const ALL: [WwOrdering; 8] = [
        WwOrdering::CiThenCj,
        WwOrdering::CiThenAj,
        WwOrdering::AiThenCj,
        WwOrdering::AiThenAj,
        WwOrdering::CjThenCi,
        WwOrdering::CjThenAi,
        WwOrdering::AjThenCi,
        WwOrdering::AjThenAi,
    ];

    /// The two terminal ops in order, as schedule text for `t1 = i, t2 = j`.
    pub fn suffix(self) -> &'static str {
        match self {
            WwOrdering::CiThenCj => "C1C2",
            WwOrdering::CiThenAj => "C1A2",
            WwOrdering::AiThenCj => "A1C2",
            WwOrdering::AiThenAj => "A1A2",
            WwOrdering::CjThenCi => "C2C1",
            WwOrdering::CjThenAi => "C2A1",
            WwOrdering::AjThenCi => "A2C1",
            WwOrdering::AjThenAi => "A2A1",
        }
    }
}

impl FromStr for WwOrdering {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ci-cj" | "CiCj" => Ok(WwOrdering::CiThenCj),
            "ci-aj" | "CiAj" => Ok(WwOrdering::CiThenAj),
            "ai-cj" | "AiCj" => Ok(WwOrdering::AiThenCj),
            "ai-aj" | "AiAj" => Ok(WwOrdering::AiThenAj),
            "cj-ci" | "CjCi" => Ok(WwOrdering::CjThenCi),
            "cj-ai" | "CjAi" => Ok(WwOrdering::CjThenAi),
            "aj-ci" | "AjCi" => Ok(WwOrdering::AjThenCi),
            "aj-ai" | "AjAi" => Ok(WwOrdering::AjThenAi),
            _ => Err(format!("invalid ordering token '{s}'")),
        }
    }
}

/// The write-write status truth table: whether `W_i ... W_j ...` followed by
/// the given terminal ordering is anomalous. Anything where `t_i`'s terminal
/// comes first is anomalous; with `t_j` first, only the double commit is.
pub fn ww_status_outcome(order: WwOrdering) -> bool {
    match order {
        WwOrdering::CiThenCj
        | WwOrdering::CiThenAj
        | WwOrdering::AiThenCj
        | WwOrdering::AiThenAj
        | WwOrdering::CjThenCi => true,
        WwOrdering::CjThenAi | WwOrdering::AjThenCi | WwOrdering::AjThenAi => false,
    }
}
