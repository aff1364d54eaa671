//! Randomized t-equality falsifier.
//!
//! Two schemas are t-equal when they agree under every total
//! interpretation: both succeed or both fail, with the same final memory.
//! That is undecidable in general, so this check samples seeded total
//! interpretations (tabulated functions over a small modulus, randomized
//! start memories) and looks for a disagreement. It can refute equality,
//! never prove it.

use std::collections::BTreeSet;

use crate::schema::Schema;

use super::{mix64, run, CellId, Interpretation, Outcome, RunStatus};

#[derive(Debug, Clone, Copy)]
pub struct TEqualConfig {
    pub trials: u32,
    pub fuel: u64,
    pub seed: u64,
    /// Modulus of the sampled value domain.
    pub modulus: u64,
}

impl Default for TEqualConfig {
    fn default() -> Self {
        TEqualConfig {
            trials: 100,
            fuel: 100_000,
            seed: 0,
            modulus: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CounterExample {
    pub trial: u32,
    pub trial_seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    NoCounterExampleFound,
    CounterExample(CounterExample),
}

impl Verdict {
    pub fn is_counterexample(&self) -> bool {
        matches!(self, Verdict::CounterExample(_))
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TEqualError {
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
}

/// Sample random total interpretations and compare outcomes. Memory is
/// compared over the footprint both schemas share (simple variables and
/// arrays occurring in both), so transform-introduced bookkeeping
/// variables do not count as differences.
pub fn t_equal_check(
    s1: &Schema,
    s2: &Schema,
    config: TEqualConfig,
) -> Result<Verdict, TEqualError> {
    let t1 = s1.symbols();
    let t2 = s2.symbols();
    for (name, arity) in &t1.fsyms {
        if let Some(other) = t2.fsyms.get(name) {
            if other != arity {
                return Err(TEqualError::SignatureMismatch(format!(
                    "function {name} has arity {arity} vs {other}"
                )));
            }
        }
        if t2.psyms.contains_key(name) {
            return Err(TEqualError::SignatureMismatch(format!(
                "{name} is a function in one schema and a predicate in the other"
            )));
        }
    }
    for (name, arity) in &t1.psyms {
        if let Some(other) = t2.psyms.get(name) {
            if other != arity {
                return Err(TEqualError::SignatureMismatch(format!(
                    "predicate {name} has arity {arity} vs {other}"
                )));
            }
        }
        if t2.fsyms.contains_key(name) {
            return Err(TEqualError::SignatureMismatch(format!(
                "{name} is a predicate in one schema and a function in the other"
            )));
        }
    }

    let shared_simple: BTreeSet<&String> = t1.simple_vars.intersection(&t2.simple_vars).collect();
    let shared_arrays: BTreeSet<&String> = t1
        .arrays
        .keys()
        .filter(|k| t2.arrays.contains_key(*k))
        .collect();

    for trial in 0..config.trials {
        let trial_seed = mix64(config.seed ^ u64::from(trial).wrapping_mul(0x2545f491));
        let interp = Interpretation::seeded(trial_seed, config.modulus.max(2));
        let o1 = run(s1, &interp, config.fuel);
        let o2 = run(s2, &interp, config.fuel);
        if o1.status == RunStatus::OutOfFuel || o2.status == RunStatus::OutOfFuel {
            continue;
        }
        if o1.status != o2.status {
            return Ok(Verdict::CounterExample(CounterExample {
                trial,
                trial_seed,
                detail: format!(
                    "statuses differ: {:?} vs {:?} ({})",
                    o1.status,
                    o2.status,
                    o1.reason.or(o2.reason).unwrap_or_default()
                ),
            }));
        }
        if o1.status == RunStatus::Final {
            if let Some(detail) = first_difference(&o1, &o2, &shared_simple, &shared_arrays) {
                return Ok(Verdict::CounterExample(CounterExample {
                    trial,
                    trial_seed,
                    detail,
                }));
            }
        }
    }
    Ok(Verdict::NoCounterExampleFound)
}

fn in_footprint(
    cell: &CellId,
    shared_simple: &BTreeSet<&String>,
    shared_arrays: &BTreeSet<&String>,
) -> bool {
    match cell {
        CellId::Simple(name) => shared_simple.contains(name),
        CellId::Arr(name, _) => shared_arrays.contains(name),
    }
}

fn first_difference(
    o1: &Outcome,
    o2: &Outcome,
    shared_simple: &BTreeSet<&String>,
    shared_arrays: &BTreeSet<&String>,
) -> Option<String> {
    let mut cells: BTreeSet<&CellId> = o1.memory.cells.keys().collect();
    cells.extend(o2.memory.cells.keys());
    for cell in cells {
        if !in_footprint(cell, shared_simple, shared_arrays) {
            continue;
        }
        let v1 = o1.memory.read(cell);
        let v2 = o2.memory.read(cell);
        if v1 != v2 {
            return Some(format!(
                "cell {cell}: {} vs {}",
                v1.map(|v| v.to_string()).unwrap_or_else(|| "empty".into()),
                v2.map(|v| v.to_string()).unwrap_or_else(|| "empty".into()),
            ));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_schema;

    #[test]
    fn schema_equals_itself() {
        let s = parse_schema("final lf;\nl1: x = f(y) then lf;\n").unwrap();
        let v = t_equal_check(&s, &s, TEqualConfig::default()).unwrap();
        assert!(!v.is_counterexample());
    }

    #[test]
    fn renamed_argument_is_refuted() {
        let s1 = parse_schema("final lf;\nl1: x = f(y) then lf;\n").unwrap();
        let s2 = parse_schema("final lf;\nl1: x = f(z) then lf;\n").unwrap();
        let v = t_equal_check(&s1, &s2, TEqualConfig::default()).unwrap();
        assert!(v.is_counterexample());
    }

    #[test]
    fn arity_conflict_is_an_error() {
        let s1 = parse_schema("final lf;\nl1: x = f(y) then lf;\n").unwrap();
        let s2 = parse_schema("final lf;\nl1: x = f(y, y) then lf;\n").unwrap();
        assert!(t_equal_check(&s1, &s2, TEqualConfig::default()).is_err());
    }
}
