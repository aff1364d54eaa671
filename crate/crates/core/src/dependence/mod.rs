//! Connection equations between loop iterations and their solutions.
//!
//! For a counted loop nest, a value written through `a[K1(m1)]` on
//! iteration `m1` can feed a read `a[K2(m2)]` on iteration `m2` exactly
//! when `K1(m1) = K2(m2)`. This module builds those equations for every
//! write/read (and write/write) pair per array, classifies them by the
//! shape of the index expressions, solves the affine case exactly over the
//! integers, and provides an execution-based oracle that observes actual
//! dependences.

mod oracle;
mod solve;

pub use oracle::{
    brute_force_dependences, dot_graph, edges_to_jsonl, solver_vs_oracle, ComparisonReport,
    DependenceEdge, EdgeKind, StepRef,
};
pub use solve::{solve_linear_equation, SolutionSet};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::schema::{
    AffineExpr, Arg, AssignRhs, Degree, IndexExpr, InstrKind, Instruction, Label, LoopCond, Schema,
    Variable,
};

/// An iteration point of a nest: one counter value per loop, outermost
/// first. Comparison order is lexicographic, which is execution order.
pub type IterVec = Vec<i64>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum DependenceError {
    #[error("analysis requires a perfect counted loop nest: {0}")]
    NotCountedNest(String),
    #[error("bounds required for counter {0}")]
    BoundsMissing(String),
    #[error("cannot infer a value for {0} from the bounds")]
    ParamUnresolved(String),
    #[error("conflicting values inferred for parameter {0}")]
    ParamConflict(String),
    #[error("not statically comparable: {0}")]
    NotComparable(String),
    #[error("enumeration cap exceeded for {0}")]
    CapExceeded(String),
    #[error("oracle execution failed: {0}")]
    Oracle(String),
}

/// One counted loop of a nest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterSpec {
    pub var: String,
    pub lo: AffineExpr,
    /// Exclusive upper bound, as written in the `for` header.
    pub hi: AffineExpr,
    pub label: Label,
}

/// A perfect counted loop nest: the counters outermost-first and the
/// innermost body statements.
#[derive(Debug, Clone)]
pub struct Nest {
    pub counters: Vec<CounterSpec>,
    pub statements: Vec<Instruction>,
}

impl Nest {
    pub fn counter_names(&self) -> Vec<&str> {
        self.counters.iter().map(|c| c.var.as_str()).collect()
    }

    pub fn depth(&self) -> usize {
        self.counters.len()
    }
}

/// Extract the counted nest of a schema: each level holds exactly one
/// counted loop, and the innermost body holds only assignments.
pub fn extract_nest(schema: &Schema) -> Result<Nest, DependenceError> {
    let mut counters = Vec::new();
    let mut block = schema;
    loop {
        let loops: Vec<&Instruction> = block
            .opers
            .iter()
            .filter(|i| matches!(i.kind, InstrKind::Loop { .. }))
            .collect();
        if loops.is_empty() {
            // Innermost level: assignments only.
            let mut statements = Vec::new();
            for instr in &block.opers {
                match &instr.kind {
                    InstrKind::Assign { .. } => statements.push(instr.clone()),
                    _ => {
                        return Err(DependenceError::NotCountedNest(format!(
                            "unsupported instruction at {}",
                            instr.label
                        )))
                    }
                }
            }
            if counters.is_empty() {
                return Err(DependenceError::NotCountedNest(
                    "no counted loop found".to_string(),
                ));
            }
            return Ok(Nest {
                counters,
                statements,
            });
        }
        if loops.len() > 1 || block.opers.len() != 1 {
            return Err(DependenceError::NotCountedNest(format!(
                "level with {} instructions around loop {}",
                block.opers.len(),
                loops[0].label
            )));
        }
        let instr = loops[0];
        let InstrKind::Loop { body, cond, .. } = &instr.kind else {
            unreachable!()
        };
        let LoopCond::Counter { var, lo, hi } = cond else {
            return Err(DependenceError::NotCountedNest(format!(
                "loop {} is not counted",
                instr.label
            )));
        };
        counters.push(CounterSpec {
            var: var.clone(),
            lo: lo.clone(),
            hi: hi.clone(),
            label: instr.label.clone(),
        });
        block = block
            .procs
            .get(body)
            .ok_or_else(|| DependenceError::NotCountedNest(format!("missing body {body}")))?;
    }
}

/// Inclusive per-counter bounds, outermost first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub counters: Vec<(String, i64, i64)>,
}

impl Bounds {
    pub fn lo(&self) -> Vec<i64> {
        self.counters.iter().map(|(_, lo, _)| *lo).collect()
    }

    pub fn hi(&self) -> Vec<i64> {
        self.counters.iter().map(|(_, _, hi)| *hi).collect()
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point.len() == self.counters.len()
            && self
                .counters
                .iter()
                .zip(point)
                .all(|((_, lo, hi), v)| lo <= v && v <= hi)
    }

    pub fn size(&self) -> u128 {
        self.counters
            .iter()
            .map(|(_, lo, hi)| {
                if hi < lo {
                    0u128
                } else {
                    (hi - lo) as u128 + 1
                }
            })
            .product()
    }

    /// Every point of the box in lexicographic order.
    pub fn points(&self) -> Vec<IterVec> {
        let mut out = Vec::new();
        if self.counters.iter().any(|(_, lo, hi)| hi < lo) {
            return out;
        }
        let mut current: Vec<i64> = self.lo();
        loop {
            out.push(current.clone());
            let mut dim = self.counters.len();
            loop {
                if dim == 0 {
                    return out;
                }
                dim -= 1;
                if current[dim] < self.counters[dim].2 {
                    current[dim] += 1;
                    for (slot, counter) in current.iter_mut().zip(&self.counters).skip(dim + 1) {
                        *slot = counter.1;
                    }
                    break;
                }
            }
        }
    }
}

/// Resolve nest bounds: explicit overrides win, otherwise constant `for`
/// headers are used directly.
pub fn resolve_bounds(
    nest: &Nest,
    overrides: &BTreeMap<String, (i64, i64)>,
) -> Result<Bounds, DependenceError> {
    let mut counters = Vec::new();
    for c in &nest.counters {
        if let Some((lo, hi)) = overrides.get(&c.var) {
            counters.push((c.var.clone(), *lo, *hi));
            continue;
        }
        let lo =
            c.lo.eval(|_| None)
                .ok_or_else(|| DependenceError::BoundsMissing(c.var.clone()))?;
        let hi =
            c.hi.eval(|_| None)
                .ok_or_else(|| DependenceError::BoundsMissing(c.var.clone()))?;
        counters.push((c.var.clone(), lo, hi - 1));
    }
    Ok(Bounds { counters })
}

/// Infer values for symbolic bound parameters (like `N` in `k < N + 1`)
/// from the resolved bounds, for executing the nest.
pub fn infer_params(
    nest: &Nest,
    bounds: &Bounds,
) -> Result<BTreeMap<String, i64>, DependenceError> {
    let mut params: BTreeMap<String, i64> = BTreeMap::new();
    for (c, (_, lo, hi)) in nest.counters.iter().zip(&bounds.counters) {
        for (expr, concrete) in [(&c.lo, *lo), (&c.hi, *hi + 1)] {
            if expr.is_constant() {
                continue;
            }
            if expr.coeffs.len() == 1 {
                let (var, coeff) = expr.coeffs.iter().next().unwrap();
                let num = concrete - expr.constant;
                if num % coeff != 0 {
                    return Err(DependenceError::ParamUnresolved(var.clone()));
                }
                let value = num / coeff;
                if let Some(prev) = params.insert(var.clone(), value) {
                    if prev != value {
                        return Err(DependenceError::ParamConflict(var.clone()));
                    }
                }
            } else {
                return Err(DependenceError::ParamUnresolved(format!(
                    "bound of {}",
                    c.var
                )));
            }
        }
    }
    Ok(params)
}

/// One array access of a nest statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessRef {
    pub label: Label,
    pub indexes: Vec<IndexExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EqKind {
    /// Write feeding a read.
    Flow,
    /// Write overwritten by a later write.
    Output,
}

/// Equated index expressions of a writer and a reader of one array over a
/// bounded iteration domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConnectionEquation {
    pub array: String,
    pub kind: EqKind,
    pub writer: AccessRef,
    pub reader: AccessRef,
    pub bounds: Bounds,
}

/// Solver routing for a connection equation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Linear,
    Polynomial(u32),
    General,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Linear => write!(f, "linear"),
            Classification::Polynomial(d) => write!(f, "polynomial({d})"),
            Classification::General => write!(f, "general"),
        }
    }
}

fn collect_writes(statements: &[Instruction]) -> Vec<(Label, String, Vec<IndexExpr>)> {
    let mut out = Vec::new();
    for instr in statements {
        if let InstrKind::Assign {
            target: Variable::Indexed { array, indexes },
            ..
        } = &instr.kind
        {
            out.push((instr.label.clone(), array.clone(), indexes.clone()));
        }
    }
    out
}

fn collect_reads(statements: &[Instruction]) -> Vec<(Label, String, Vec<IndexExpr>)> {
    let mut out = Vec::new();
    for instr in statements {
        if let InstrKind::Assign {
            rhs: AssignRhs::Apply { args, .. },
            ..
        } = &instr.kind
        {
            for arg in args {
                if let Arg::Var(Variable::Indexed { array, indexes }) = arg {
                    out.push((instr.label.clone(), array.clone(), indexes.clone()));
                }
            }
        }
    }
    out
}

/// One equation per same-array (write, read) pair, plus write/write pairs
/// flagged as output dependences.
pub fn build_connection_equations(nest: &Nest, bounds: &Bounds) -> Vec<ConnectionEquation> {
    let writes = collect_writes(&nest.statements);
    let reads = collect_reads(&nest.statements);
    let mut out = Vec::new();
    for (wl, wa, wi) in &writes {
        for (rl, ra, ri) in &reads {
            if wa == ra {
                out.push(ConnectionEquation {
                    array: wa.clone(),
                    kind: EqKind::Flow,
                    writer: AccessRef {
                        label: wl.clone(),
                        indexes: wi.clone(),
                    },
                    reader: AccessRef {
                        label: rl.clone(),
                        indexes: ri.clone(),
                    },
                    bounds: bounds.clone(),
                });
            }
        }
    }
    for (i, (wl, wa, wi)) in writes.iter().enumerate() {
        for (w2l, w2a, w2i) in writes.iter().skip(i) {
            if wa == w2a {
                out.push(ConnectionEquation {
                    array: wa.clone(),
                    kind: EqKind::Output,
                    writer: AccessRef {
                        label: wl.clone(),
                        indexes: wi.clone(),
                    },
                    reader: AccessRef {
                        label: w2l.clone(),
                        indexes: w2i.clone(),
                    },
                    bounds: bounds.clone(),
                });
            }
        }
    }
    out
}

/// Classify by the most complex index expression on either side: affine
/// over the counters is linear, polynomial over the counters keeps its
/// degree, anything else (uninterpreted index functions, variables other
/// than counters) is general and never reaches the exact solver.
pub fn classify(eq: &ConnectionEquation, counters: &[&str]) -> Classification {
    let mut max_degree = 0u32;
    for e in eq.writer.indexes.iter().chain(&eq.reader.indexes) {
        let vars = e.vars();
        if vars.iter().any(|v| !counters.contains(&v.as_str())) {
            return Classification::General;
        }
        match e.degree() {
            Degree::Poly(d) => max_degree = max_degree.max(d),
            Degree::NonPolynomial => return Classification::General,
        }
    }
    if max_degree >= 2 {
        Classification::Polynomial(max_degree)
    } else {
        Classification::Linear
    }
}
