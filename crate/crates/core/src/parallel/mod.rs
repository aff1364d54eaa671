//! Programs with predecessor index semantics and their parallel structure.
//!
//! In this dialect a read like `a[g1(m), …, gn(m)]` names the *iteration*
//! that produced the value, not an array cell: the target must be a
//! lexicographically earlier point of the nest, or fall outside the
//! iteration box, in which case it is start data. Writes always produce
//! the current iteration's value, so the left side is the bare array name.
//!
//! With dependences explicit, scheduling is dataflow: an iteration whose
//! reads are all start data has level 0, everything else sits one level
//! above its deepest in-box predecessor. Iterations of one level form a
//! wavefront and may run in any order.

mod cone;
mod hyperplane;
mod wavefront;

pub use cone::{cone_of, coschedulable_check, independent_set_check, Cone, ConeCache};
pub use hyperplane::{
    distance_vectors, find_hyperplane, hyperplane_groups, normal_for_distances, Hyperplane,
};
pub use wavefront::{
    replay_lexicographic, replay_wavefronts, schedule_wavefronts, ReplayMemory, Wavefront,
};

use std::collections::BTreeSet;

use serde::Serialize;

use crate::dependence::{extract_nest, Bounds, CounterSpec, DependenceError, IterVec};
use crate::schema::{AffineExpr, Arg, AssignRhs, IndexExpr, InstrKind, Label, Schema, Variable};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ParallelError {
    #[error(transparent)]
    Nest(#[from] DependenceError),
    #[error("not a predecessor-form program: {0}")]
    NotPredecessorForm(String),
    #[error("apex {0:?} is outside the iteration box")]
    ApexOutsideBox(IterVec),
    #[error("dependence cycle detected")]
    CycleDetected,
    #[error("read distances are not constant: {0}")]
    NonConstantDistances(String),
    #[error("replay needed a value that was never produced at {0:?}")]
    MissingValue(IterVec),
}

/// One read argument of a statement: a predecessor iteration of an array,
/// given by per-dimension affine expressions over the counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredRead {
    pub array: String,
    pub point: Vec<AffineExpr>,
}

impl PredRead {
    /// The iteration this read names, evaluated at `p`.
    pub fn target(&self, counters: &[String], p: &[i64]) -> IterVec {
        self.point
            .iter()
            .map(|e| {
                e.eval(|v| counters.iter().position(|c| c == v).map(|slot| p[slot]))
                    .expect("validated affine over counters")
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredArg {
    Read(PredRead),
    Int(i64),
}

/// `target = f(reads…)`, writing the target array at the current
/// iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredStatement {
    pub label: Label,
    pub target: String,
    pub fsym: String,
    pub args: Vec<PredArg>,
}

impl PredStatement {
    pub fn reads(&self) -> impl Iterator<Item = &PredRead> {
        self.args.iter().filter_map(|a| match a {
            PredArg::Read(r) => Some(r),
            PredArg::Int(_) => None,
        })
    }
}

/// A counted nest whose statements use predecessor index semantics.
#[derive(Debug, Clone)]
pub struct PredecessorProgram {
    pub counters: Vec<CounterSpec>,
    pub statements: Vec<PredStatement>,
    /// Arrays written by the nest; reads of other arrays are start data.
    pub local_arrays: BTreeSet<String>,
}

impl PredecessorProgram {
    pub fn counter_names(&self) -> Vec<String> {
        self.counters.iter().map(|c| c.var.clone()).collect()
    }

    pub fn depth(&self) -> usize {
        self.counters.len()
    }

    /// In-box predecessors of a point: targets of local-array reads.
    pub fn predecessors(&self, bounds: &Bounds, p: &[i64]) -> BTreeSet<IterVec> {
        let counters = self.counter_names();
        let mut out = BTreeSet::new();
        for stmt in &self.statements {
            for read in stmt.reads() {
                if !self.local_arrays.contains(&read.array) {
                    continue;
                }
                let q = read.target(&counters, p);
                if bounds.contains(&q) {
                    out.insert(q);
                }
            }
        }
        out
    }
}

/// Reinterpret a counted nest as a predecessor-form program.
pub fn predecessor_program(schema: &Schema) -> Result<PredecessorProgram, ParallelError> {
    let nest = extract_nest(schema)?;
    let depth = nest.depth();
    let counter_names: Vec<&str> = nest.counter_names();

    let mut statements = Vec::new();
    let mut local_arrays = BTreeSet::new();
    for instr in &nest.statements {
        let InstrKind::Assign { target, rhs, .. } = &instr.kind else {
            unreachable!("nest statements are assignments");
        };
        let target_name = match target {
            Variable::Simple(name) => name.clone(),
            Variable::Indexed { array, .. } => {
                return Err(ParallelError::NotPredecessorForm(format!(
                    "left side of {} must be the bare array name, found {array}[…]",
                    instr.label
                )))
            }
        };
        let AssignRhs::Apply { fsym, args } = rhs else {
            return Err(ParallelError::NotPredecessorForm(format!(
                "statement {} must apply a function symbol",
                instr.label
            )));
        };
        let mut pred_args = Vec::new();
        for arg in args {
            match arg {
                Arg::Int(n) => pred_args.push(PredArg::Int(*n)),
                Arg::Var(Variable::Indexed { array, indexes }) => {
                    if indexes.len() != depth {
                        return Err(ParallelError::NotPredecessorForm(format!(
                            "read of {array} at {} names {} coordinates for a depth-{depth} nest",
                            instr.label,
                            indexes.len()
                        )));
                    }
                    let mut point = Vec::new();
                    for e in indexes {
                        let IndexExpr::Affine(a) = e else {
                            return Err(ParallelError::NotPredecessorForm(format!(
                                "read of {array} at {} must use affine coordinates",
                                instr.label
                            )));
                        };
                        if a.vars().any(|v| !counter_names.contains(&v)) {
                            return Err(ParallelError::NotPredecessorForm(format!(
                                "read of {array} at {} uses a non-counter variable",
                                instr.label
                            )));
                        }
                        point.push(a.clone());
                    }
                    pred_args.push(PredArg::Read(PredRead {
                        array: array.clone(),
                        point,
                    }));
                }
                Arg::Var(Variable::Simple(name)) => {
                    return Err(ParallelError::NotPredecessorForm(format!(
                        "read of bare {name} at {}: reads must name an iteration",
                        instr.label
                    )))
                }
                Arg::LabelLit(_) => {
                    return Err(ParallelError::NotPredecessorForm(format!(
                        "label literal argument at {}",
                        instr.label
                    )))
                }
            }
        }
        local_arrays.insert(target_name.clone());
        statements.push(PredStatement {
            label: instr.label.clone(),
            target: target_name,
            fsym: fsym.clone(),
            args: pred_args,
        });
    }
    Ok(PredecessorProgram {
        counters: nest.counters,
        statements,
        local_arrays,
    })
}

/// A read that resolves to an in-box iteration not strictly earlier than
/// the reading point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredViolation {
    pub point: IterVec,
    pub label: Label,
    pub array: String,
    pub target: IterVec,
}

/// Scan the box and report every read whose target is an in-box iteration
/// that is not lexicographically smaller than the reading point.
pub fn validate_predecessors(prog: &PredecessorProgram, bounds: &Bounds) -> Vec<PredViolation> {
    let counters = prog.counter_names();
    let mut out = Vec::new();
    for p in bounds.points() {
        for stmt in &prog.statements {
            for read in stmt.reads() {
                if !prog.local_arrays.contains(&read.array) {
                    continue;
                }
                let q = read.target(&counters, &p);
                if bounds.contains(&q) && q >= p {
                    out.push(PredViolation {
                        point: p.clone(),
                        label: stmt.label.clone(),
                        array: read.array.clone(),
                        target: q,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::text::parse_schema;

    /// Four-point sweep whose reads each drop exactly one plane of
    /// `k + i + j`.
    pub fn plane_stencil() -> PredecessorProgram {
        let text = "lk: for (k = 1; k < N + 1; k++) {\n  li: for (i = 1; i < N + 1; i++) {\n    lj: for (j = 1; j < N + 1; j++) {\n      ls: f = avg4(f[k, i - 1, j], f[k, i, j - 1], f[k - 1, i, j], f[k - 1, i + 1, j - 1]) then le;\n      final le;\n    }\n  }\n}\n";
        predecessor_program(&parse_schema(text).unwrap()).unwrap()
    }

    /// The same sweep with the skewed reads `(k-1, i+1, j)` and
    /// `(k-1, i, j+1)`.
    pub fn skew_stencil() -> PredecessorProgram {
        let text = "lk: for (k = 1; k < N + 1; k++) {\n  li: for (i = 1; i < N + 1; i++) {\n    lj: for (j = 1; j < N + 1; j++) {\n      ls: f = avg4(f[k, i - 1, j], f[k, i, j - 1], f[k - 1, i + 1, j], f[k - 1, i, j + 1]) then le;\n      final le;\n    }\n  }\n}\n";
        predecessor_program(&parse_schema(text).unwrap()).unwrap()
    }

    pub fn boxed(prog: &PredecessorProgram, n: i64) -> Bounds {
        let counters = prog
            .counter_names()
            .into_iter()
            .map(|c| (c, 1i64, n))
            .collect();
        Bounds { counters }
    }
}
