//! Execution of schemas.
//!
//! Two modes share one executor: *concrete* mode maps function and
//! predicate symbols to integer functions, *Herbrand* mode builds symbolic
//! terms that record the computation path and resolves predicates through a
//! finite diagram of signed ground atoms. Both run under a fuel budget
//! because schemas may diverge.

mod herbrand;
mod run;
mod tequal;

pub use herbrand::{eval_term, parse_diagram, print_diagram, Diagram};
pub use run::{herbrand_run, herbrand_run_with, run, run_traced, AccessEvent, AccessKind, Trace};
pub use tequal::{t_equal_check, CounterExample, TEqualConfig, TEqualError, Verdict};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::schema::Label;

/// Deterministic 64-bit mixer (splitmix64 finalizer), the seed source for
/// randomized interpretations and hashed start data.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

pub(crate) fn mix_str(seed: u64, s: &str) -> u64 {
    let mut h = mix64(seed ^ 0x517cc1b727220a95);
    for b in s.as_bytes() {
        h = mix64(h ^ u64::from(*b));
    }
    h
}

/// A symbolic computation-history value: variables, array-cell expressions,
/// and function applications. Integer and label constants are encoded as
/// nullary applications.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Cell(String, Vec<Term>),
    App(String, Vec<Term>),
}

impl Term {
    pub fn int(n: i64) -> Term {
        Term::App(n.to_string(), Vec::new())
    }

    pub fn label(l: &Label) -> Term {
        Term::App(format!("'{l}"), Vec::new())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::App(name, args) if args.is_empty() => name.parse().ok(),
            _ => None,
        }
    }

    /// Nesting depth of array-cell expressions: variables and applications
    /// add nothing, each cell layer adds one.
    pub fn bracket_depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, args) => args.iter().map(Term::bracket_depth).max().unwrap_or(0),
            Term::Cell(_, args) => 1 + args.iter().map(Term::bracket_depth).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(name) => f.write_str(name),
            Term::App(name, args) if args.is_empty() => f.write_str(name),
            Term::App(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Term::Cell(name, args) => {
                write!(f, "{name}[")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// A runtime value: a 64-bit integer, a label constant (for the interpreted
/// dispatch bookkeeping), or a symbolic term in Herbrand mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Label(Label),
    Term(Term),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            Value::Term(t) => t.as_int(),
            Value::Label(_) => None,
        }
    }

    /// Lift into the term domain.
    pub fn to_term(&self) -> Term {
        match self {
            Value::Int(n) => Term::int(*n),
            Value::Label(l) => Term::label(l),
            Value::Term(t) => t.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Label(l) => write!(f, "'{l}"),
            Value::Term(t) => write!(f, "{t}"),
        }
    }
}

/// Identity of a memory cell: a simple name, or an array name with one
/// index value per dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellId {
    Simple(String),
    Arr(String, Vec<Value>),
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellId::Simple(name) => f.write_str(name),
            CellId::Arr(name, ix) => {
                write!(f, "{name}[")?;
                for (i, v) in ix.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// What an unassigned cell reads as.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellDefault {
    /// Empty cells have no value; reading one ends the run without result.
    Strict,
    /// Deterministic seeded start data: every cell is pre-filled with a
    /// hash of its identity, reduced modulo `modulus` when given.
    Hashed { seed: u64, modulus: Option<u64> },
    /// Herbrand start data: a simple cell holds its own variable, an array
    /// cell holds the cell expression itself.
    HerbrandFree,
}

/// Cell store for one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    pub cells: BTreeMap<CellId, Value>,
    pub default: CellDefault,
}

impl Default for Memory {
    fn default() -> Self {
        Memory::strict()
    }
}

impl Memory {
    pub fn strict() -> Self {
        Memory {
            cells: BTreeMap::new(),
            default: CellDefault::Strict,
        }
    }

    pub fn hashed(seed: u64, modulus: Option<u64>) -> Self {
        Memory {
            cells: BTreeMap::new(),
            default: CellDefault::Hashed { seed, modulus },
        }
    }

    pub fn herbrand() -> Self {
        Memory {
            cells: BTreeMap::new(),
            default: CellDefault::HerbrandFree,
        }
    }

    pub fn set(&mut self, cell: CellId, value: Value) {
        self.cells.insert(cell, value);
    }

    pub fn set_simple(&mut self, name: &str, value: Value) {
        self.cells.insert(CellId::Simple(name.to_string()), value);
    }

    /// Read a cell, falling back to the default policy.
    pub fn read(&self, cell: &CellId) -> Option<Value> {
        if let Some(v) = self.cells.get(cell) {
            return Some(v.clone());
        }
        match &self.default {
            CellDefault::Strict => None,
            CellDefault::Hashed { seed, modulus } => {
                let h = mix_str(*seed, &cell.to_string());
                let n = match modulus {
                    Some(m) if *m > 0 => (h % m) as i64,
                    _ => (h >> 1) as i64,
                };
                Some(Value::Int(n))
            }
            CellDefault::HerbrandFree => Some(match cell {
                CellId::Simple(name) => Value::Term(Term::Var(name.clone())),
                CellId::Arr(name, ix) => Value::Term(Term::Cell(
                    name.clone(),
                    ix.iter().map(Value::to_term).collect(),
                )),
            }),
        }
    }

    /// Canonical `cell = value` lines, sorted by rendered cell name.
    pub fn dump_lines(&self) -> String {
        let mut lines: Vec<String> = self
            .cells
            .iter()
            .map(|(cell, value)| format!("{cell} = {value}\n"))
            .collect();
        lines.sort();
        lines.concat()
    }
}

/// An arbitrary partial function over values.
pub type NativeFn = Arc<dyn Fn(&[Value]) -> Option<Value> + Send + Sync>;

/// An arbitrary partial predicate over values.
pub type NativePred = Arc<dyn Fn(&[Value]) -> Option<bool> + Send + Sync>;

/// Interpretation of a function symbol.
#[derive(Clone)]
pub enum FuncInterp {
    /// An arbitrary partial function over values.
    Native(NativeFn),
    /// A total seeded table over `Z_modulus`, lifted pointwise: integer
    /// arguments are reduced modulo `modulus`, other values enter through
    /// their canonical text.
    Seeded { seed: u64, modulus: u64 },
}

impl fmt::Debug for FuncInterp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuncInterp::Native(_) => f.write_str("FuncInterp::Native(..)"),
            FuncInterp::Seeded { seed, modulus } => f
                .debug_struct("FuncInterp::Seeded")
                .field("seed", seed)
                .field("modulus", modulus)
                .finish(),
        }
    }
}

impl FuncInterp {
    pub fn native(f: impl Fn(&[Value]) -> Option<Value> + Send + Sync + 'static) -> Self {
        FuncInterp::Native(Arc::new(f))
    }

    pub fn apply(&self, name: &str, args: &[Value]) -> Option<Value> {
        match self {
            FuncInterp::Native(f) => f(args),
            FuncInterp::Seeded { seed, modulus } => {
                Some(Value::Int(seeded_eval(*seed, *modulus, name, args)))
            }
        }
    }
}

/// Interpretation of a predicate symbol.
#[derive(Clone)]
pub enum PredInterp {
    Native(NativePred),
    Seeded { seed: u64, modulus: u64 },
}

impl fmt::Debug for PredInterp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredInterp::Native(_) => f.write_str("PredInterp::Native(..)"),
            PredInterp::Seeded { seed, modulus } => f
                .debug_struct("PredInterp::Seeded")
                .field("seed", seed)
                .field("modulus", modulus)
                .finish(),
        }
    }
}

impl PredInterp {
    pub fn native(f: impl Fn(&[Value]) -> Option<bool> + Send + Sync + 'static) -> Self {
        PredInterp::Native(Arc::new(f))
    }

    pub fn query(&self, name: &str, args: &[Value]) -> Option<bool> {
        match self {
            PredInterp::Native(f) => f(args),
            PredInterp::Seeded { seed, modulus } => {
                Some(seeded_eval(*seed, *modulus, name, args) & 1 == 1)
            }
        }
    }
}

fn seeded_eval(seed: u64, modulus: u64, name: &str, args: &[Value]) -> i64 {
    let m = modulus.max(1);
    let mut h = mix_str(seed, name);
    for a in args {
        match a.as_int() {
            Some(n) => h = mix64(h ^ (n.rem_euclid(m as i64) as u64)),
            None => h = mix_str(h, &a.to_string()),
        }
    }
    (h % m) as i64
}

/// Functions, predicates, and start memory for a concrete run.
#[derive(Debug, Clone, Default)]
pub struct Interpretation {
    pub functions: BTreeMap<String, FuncInterp>,
    pub predicates: BTreeMap<String, PredInterp>,
    pub start_memory: Memory,
}

impl Interpretation {
    /// A total interpretation: every symbol resolves through a seeded table
    /// and every cell reads as seeded start data.
    pub fn seeded(seed: u64, modulus: u64) -> Self {
        Interpretation {
            functions: BTreeMap::new(),
            predicates: BTreeMap::new(),
            start_memory: Memory::hashed(mix64(seed ^ 0xa5a5_5a5a), Some(modulus)),
        }
        .with_fallback(seed, modulus)
    }

    fn with_fallback(mut self, seed: u64, modulus: u64) -> Self {
        self.functions.insert(
            "*".to_string(),
            FuncInterp::Seeded {
                seed: mix64(seed ^ 1),
                modulus,
            },
        );
        self.predicates.insert(
            "*".to_string(),
            PredInterp::Seeded {
                seed: mix64(seed ^ 2),
                modulus,
            },
        );
        self
    }

    pub fn with_function(mut self, name: &str, f: FuncInterp) -> Self {
        self.functions.insert(name.to_string(), f);
        self
    }

    pub fn with_predicate(mut self, name: &str, p: PredInterp) -> Self {
        self.predicates.insert(name.to_string(), p);
        self
    }

    pub fn with_start(mut self, name: &str, v: Value) -> Self {
        self.start_memory.set_simple(name, v);
        self
    }

    pub(crate) fn function(&self, name: &str) -> Option<&FuncInterp> {
        self.functions.get(name).or_else(|| self.functions.get("*"))
    }

    pub(crate) fn predicate(&self, name: &str) -> Option<&PredInterp> {
        self.predicates
            .get(name)
            .or_else(|| self.predicates.get("*"))
    }
}

/// How an execution ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum RunStatus {
    Final,
    OutOfFuel,
    Undefined,
}

/// Result of one execution: status, the memory reached, and the number of
/// executed instruction steps.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: RunStatus,
    pub memory: Memory,
    pub steps: u64,
    pub reason: Option<String>,
}

impl Outcome {
    pub fn is_final(&self) -> bool {
        self.status == RunStatus::Final
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_depth_counts_cell_layers() {
        let t = Term::Cell(
            "data".into(),
            vec![Term::Cell(
                "ptr".into(),
                vec![Term::App("succ".into(), vec![Term::Var("node".into())])],
            )],
        );
        assert_eq!(t.bracket_depth(), 2);
        assert_eq!(Term::Var("x".into()).bracket_depth(), 0);
        assert_eq!(Term::int(5).bracket_depth(), 0);
    }

    #[test]
    fn memory_defaults() {
        let m = Memory::herbrand();
        let cell = CellId::Arr("a".into(), vec![Value::Term(Term::Var("i".into()))]);
        match m.read(&cell) {
            Some(Value::Term(Term::Cell(name, args))) => {
                assert_eq!(name, "a");
                assert_eq!(args, vec![Term::Var("i".into())]);
            }
            other => panic!("unexpected default {other:?}"),
        }
        assert!(Memory::strict().read(&cell).is_none());
        let h = Memory::hashed(7, Some(7));
        let v = h.read(&cell).unwrap();
        assert!(matches!(v, Value::Int(n) if (0..7).contains(&n)));
        assert_eq!(h.read(&cell), h.read(&cell));
    }

    #[test]
    fn dump_is_sorted_and_stable() {
        let mut m = Memory::strict();
        m.set_simple("z", Value::Int(1));
        m.set_simple("a", Value::Label(Label::new("l2")));
        m.set(CellId::Arr("b".into(), vec![Value::Int(0)]), Value::Int(9));
        assert_eq!(m.dump_lines(), "a = 'l2\nb[0] = 9\nz = 1\n");
    }
}
