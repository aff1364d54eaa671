//! Core data model for program schemas.
//!
//! A schema is a set of labelled instructions over uninterpreted function
//! and predicate symbols, together with named sub-schemas (procedures).
//! Instructions come in four forms: assignment, conditional branch, loop
//! with a body procedure, and plain procedure call. Variables are either
//! simple names or array accesses whose bracket contents are index
//! expressions over simple variables only.

mod validate;
mod var_sets;

pub use validate::{validate, ValidationReport, Violation};
pub use var_sets::{var_sets, var_sets_schema, VarSets};

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

/// An instruction label. Unique as an input label within a schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Label(pub String);

impl Label {
    pub fn new(name: impl Into<String>) -> Self {
        Label(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// An affine integer expression: a linear combination of simple variables
/// plus a constant. Canonical form drops zero coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AffineExpr {
    pub coeffs: BTreeMap<String, i64>,
    pub constant: i64,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        AffineExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(name: impl Into<String>) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.into(), 1);
        AffineExpr {
            coeffs,
            constant: 0,
        }
    }

    pub fn add_term(mut self, name: impl Into<String>, coeff: i64) -> Self {
        if coeff != 0 {
            let e = self.coeffs.entry(name.into()).or_insert(0);
            *e += coeff;
            if *e == 0 {
                self.coeffs.retain(|_, c| *c != 0);
            }
        }
        self
    }

    pub fn with_constant(mut self, c: i64) -> Self {
        self.constant = c;
        self
    }

    /// Variables occurring with a non-zero coefficient.
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.coeffs.keys().map(|s| s.as_str())
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Value if the expression is a bare variable with coefficient 1.
    pub fn as_plain_var(&self) -> Option<&str> {
        if self.constant == 0 && self.coeffs.len() == 1 {
            let (v, c) = self.coeffs.iter().next().unwrap();
            if *c == 1 {
                return Some(v);
            }
        }
        None
    }

    /// Evaluate over an integer environment; `None` on missing variable or
    /// overflow.
    pub fn eval<F>(&self, mut lookup: F) -> Option<i64>
    where
        F: FnMut(&str) -> Option<i64>,
    {
        let mut acc: i64 = self.constant;
        for (v, c) in &self.coeffs {
            let val = lookup(v)?;
            acc = acc.checked_add(val.checked_mul(*c)?)?;
        }
        Some(acc)
    }
}

/// Non-affine index expression: an arithmetic tree whose leaves are
/// constants, simple variables, and applications of index function symbols
/// to simple variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GeneralExpr {
    Const(i64),
    Var(String),
    Apply(String, Vec<String>),
    Add(Box<GeneralExpr>, Box<GeneralExpr>),
    Sub(Box<GeneralExpr>, Box<GeneralExpr>),
    Mul(Box<GeneralExpr>, Box<GeneralExpr>),
}

/// Polynomial degree of an index expression, or non-polynomial when an
/// uninterpreted index function occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    Poly(u32),
    NonPolynomial,
}

impl GeneralExpr {
    pub fn degree(&self) -> Degree {
        use Degree::*;
        match self {
            GeneralExpr::Const(_) => Poly(0),
            GeneralExpr::Var(_) => Poly(1),
            GeneralExpr::Apply(..) => NonPolynomial,
            GeneralExpr::Add(a, b) | GeneralExpr::Sub(a, b) => match (a.degree(), b.degree()) {
                (Poly(x), Poly(y)) => Poly(x.max(y)),
                _ => NonPolynomial,
            },
            GeneralExpr::Mul(a, b) => match (a.degree(), b.degree()) {
                (Poly(x), Poly(y)) => Poly(x + y),
                _ => NonPolynomial,
            },
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            GeneralExpr::Const(_) => {}
            GeneralExpr::Var(v) => out.push(v.clone()),
            GeneralExpr::Apply(_, args) => out.extend(args.iter().cloned()),
            GeneralExpr::Add(a, b) | GeneralExpr::Sub(a, b) | GeneralExpr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Function symbols applied inside the expression, with arities.
    pub fn collect_fsyms(&self, out: &mut Vec<(String, usize)>) {
        match self {
            GeneralExpr::Apply(f, args) => out.push((f.clone(), args.len())),
            GeneralExpr::Add(a, b) | GeneralExpr::Sub(a, b) | GeneralExpr::Mul(a, b) => {
                a.collect_fsyms(out);
                b.collect_fsyms(out);
            }
            _ => {}
        }
    }
}

/// An index expression inside array brackets. Parsed into affine normal
/// form whenever it is an integer-linear combination of simple variables
/// plus a constant; kept as a general tree otherwise.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexExpr {
    Affine(AffineExpr),
    General(GeneralExpr),
}

impl IndexExpr {
    pub fn degree(&self) -> Degree {
        match self {
            IndexExpr::Affine(a) => {
                if a.is_constant() {
                    Degree::Poly(0)
                } else {
                    Degree::Poly(1)
                }
            }
            IndexExpr::General(g) => g.degree(),
        }
    }

    /// Simple variables read by the expression.
    pub fn vars(&self) -> Vec<String> {
        match self {
            IndexExpr::Affine(a) => a.vars().map(str::to_string).collect(),
            IndexExpr::General(g) => {
                let mut out = Vec::new();
                g.collect_vars(&mut out);
                out.sort();
                out.dedup();
                out
            }
        }
    }

    pub fn as_affine(&self) -> Option<&AffineExpr> {
        match self {
            IndexExpr::Affine(a) => Some(a),
            IndexExpr::General(_) => None,
        }
    }
}

/// A program variable: a simple cell name or an array access.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    Simple(String),
    Indexed {
        array: String,
        indexes: Vec<IndexExpr>,
    },
}

impl Variable {
    pub fn simple(name: impl Into<String>) -> Self {
        Variable::Simple(name.into())
    }

    pub fn indexed(array: impl Into<String>, indexes: Vec<IndexExpr>) -> Self {
        Variable::Indexed {
            array: array.into(),
            indexes,
        }
    }

    pub fn is_indexed(&self) -> bool {
        matches!(self, Variable::Indexed { .. })
    }

    /// Simple variables used in index positions of this variable.
    pub fn index_vars(&self) -> Vec<String> {
        match self {
            Variable::Simple(_) => Vec::new(),
            Variable::Indexed { indexes, .. } => {
                let mut out: Vec<String> = indexes.iter().flat_map(|e| e.vars()).collect();
                out.sort();
                out.dedup();
                out
            }
        }
    }
}

/// An instruction argument: a variable, an integer literal, or a label
/// literal. Label literals exist for the interpreted dispatch bookkeeping
/// introduced by the separation and goto-elimination transforms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arg {
    Var(Variable),
    Int(i64),
    LabelLit(Label),
}

impl Arg {
    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            Arg::Var(v) => Some(v),
            _ => None,
        }
    }
}

/// Right-hand side of an assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssignRhs {
    /// `x = g(arg, ...)` with an uninterpreted function symbol.
    Apply { fsym: String, args: Vec<Arg> },
    /// `x = 2*i + 1`: interpreted affine arithmetic (covers plain copies
    /// and integer constants).
    Affine(AffineExpr),
    /// `x = 'l`: an interpreted label constant.
    LabelLit(Label),
}

/// Iteration condition of a loop instruction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LoopCond {
    /// `do P while p(args)`: run the body, then repeat while the predicate
    /// holds.
    While { psym: String, args: Vec<Arg> },
    /// Counted loop from the `for` sugar: an interpreted counter running
    /// `lo, lo+1, ..` while strictly below `hi`, tested before each pass.
    Counter {
        var: String,
        lo: AffineExpr,
        hi: AffineExpr,
    },
}

/// Instruction payload, one of the four schema forms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InstrKind {
    Assign {
        target: Variable,
        rhs: AssignRhs,
        next: Label,
    },
    Cond {
        psym: String,
        args: Vec<Arg>,
        then_label: Label,
        else_label: Label,
    },
    Loop {
        body: String,
        cond: LoopCond,
        next: Label,
    },
    Call {
        body: String,
        next: Label,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instruction {
    pub label: Label,
    pub kind: InstrKind,
}

impl Instruction {
    /// Output labels, in syntactic order.
    pub fn out_labels(&self) -> Vec<&Label> {
        match &self.kind {
            InstrKind::Assign { next, .. }
            | InstrKind::Loop { next, .. }
            | InstrKind::Call { next, .. } => vec![next],
            InstrKind::Cond {
                then_label,
                else_label,
                ..
            } => vec![then_label, else_label],
        }
    }

    /// Rewrite every output label through `f`.
    pub fn map_out_labels(&mut self, mut f: impl FnMut(&Label) -> Label) {
        match &mut self.kind {
            InstrKind::Assign { next, .. }
            | InstrKind::Loop { next, .. }
            | InstrKind::Call { next, .. } => *next = f(next),
            InstrKind::Cond {
                then_label,
                else_label,
                ..
            } => {
                *then_label = f(then_label);
                *else_label = f(else_label);
            }
        }
    }

    /// Name of the body procedure for loop and call forms.
    pub fn body_proc(&self) -> Option<&str> {
        match &self.kind {
            InstrKind::Loop { body, .. } | InstrKind::Call { body, .. } => Some(body),
            _ => None,
        }
    }

    /// The counter managed by this instruction, for counted loops.
    pub fn counter_var(&self) -> Option<&str> {
        match &self.kind {
            InstrKind::Loop {
                cond: LoopCond::Counter { var, .. },
                ..
            } => Some(var),
            _ => None,
        }
    }
}

/// A program schema: labelled instructions, a start and a final label, and
/// named sub-schemas. Function-symbol, simple-variable, and array tables
/// are derived from the instructions (see [`Schema::symbols`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub opers: Vec<Instruction>,
    pub start: Label,
    pub fin: Label,
    pub procs: BTreeMap<String, Schema>,
}

impl Schema {
    /// An empty schema whose start coincides with its final label.
    pub fn empty(fin: Label) -> Self {
        Schema {
            opers: Vec::new(),
            start: fin.clone(),
            fin,
            procs: BTreeMap::new(),
        }
    }

    pub fn instr(&self, label: &Label) -> Option<&Instruction> {
        self.opers.iter().find(|i| &i.label == label)
    }

    /// Look up a procedure in this schema or, transitively, in any nested
    /// procedure scope below it.
    pub fn find_proc(&self, name: &str) -> Option<&Schema> {
        if let Some(p) = self.procs.get(name) {
            return Some(p);
        }
        for p in self.procs.values() {
            if let Some(found) = p.find_proc(name) {
                return Some(found);
            }
        }
        None
    }

    /// This schema and every nested procedure, outermost first.
    pub fn all_schemas(&self) -> Vec<(&str, &Schema)> {
        let mut out: Vec<(&str, &Schema)> = vec![("", self)];
        let mut stack: Vec<&Schema> = vec![self];
        while let Some(s) = stack.pop() {
            for (name, p) in &s.procs {
                out.push((name.as_str(), p));
                stack.push(p);
            }
        }
        out
    }

    /// Collect symbol tables (first occurrence wins; conflicts surface in
    /// [`validate`]).
    pub fn symbols(&self) -> SymbolTable {
        let mut table = SymbolTable::default();
        for (_, s) in self.all_schemas() {
            for instr in &s.opers {
                table.absorb_instruction(instr);
            }
        }
        table
    }

    /// Every identifier in use: labels, variables, arrays, symbols, proc
    /// names. Used by the transforms to mint fresh names.
    pub fn used_names(&self) -> std::collections::BTreeSet<String> {
        let mut names = std::collections::BTreeSet::new();
        for (proc_name, s) in self.all_schemas() {
            if !proc_name.is_empty() {
                names.insert(proc_name.to_string());
            }
            names.insert(s.start.0.clone());
            names.insert(s.fin.0.clone());
            for instr in &s.opers {
                names.insert(instr.label.0.clone());
                for l in instr.out_labels() {
                    names.insert(l.0.clone());
                }
            }
        }
        let table = self.symbols();
        names.extend(table.fsyms.keys().cloned());
        names.extend(table.psyms.keys().cloned());
        names.extend(table.simple_vars.iter().cloned());
        names.extend(table.arrays.keys().cloned());
        names
    }
}

/// Derived symbol information for a schema tree.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    /// Function symbols with the arity of their first occurrence.
    pub fsyms: BTreeMap<String, usize>,
    /// Predicate symbols with the arity of their first occurrence.
    pub psyms: BTreeMap<String, usize>,
    pub simple_vars: std::collections::BTreeSet<String>,
    /// Array names with the dimensionality of their first occurrence.
    pub arrays: BTreeMap<String, usize>,
    /// (symbol, seen arity, expected arity) conflicts, in traversal order.
    pub arity_conflicts: Vec<(String, usize, usize)>,
    /// (array, seen dim, expected dim) conflicts, in traversal order.
    pub dim_conflicts: Vec<(String, usize, usize)>,
}

impl SymbolTable {
    fn absorb_variable(&mut self, v: &Variable) {
        match v {
            Variable::Simple(name) => {
                self.simple_vars.insert(name.clone());
            }
            Variable::Indexed { array, indexes } => {
                let dim = indexes.len();
                let entry = *self.arrays.entry(array.clone()).or_insert(dim);
                if entry != dim {
                    self.dim_conflicts.push((array.clone(), dim, entry));
                }
                for e in indexes {
                    for var in e.vars() {
                        self.simple_vars.insert(var);
                    }
                    if let IndexExpr::General(g) = e {
                        let mut fs = Vec::new();
                        g.collect_fsyms(&mut fs);
                        for (f, arity) in fs {
                            self.note_fsym(&f, arity);
                        }
                    }
                }
            }
        }
    }

    fn absorb_arg(&mut self, a: &Arg) {
        if let Arg::Var(v) = a {
            self.absorb_variable(v);
        }
    }

    fn note_fsym(&mut self, name: &str, arity: usize) {
        let entry = *self.fsyms.entry(name.to_string()).or_insert(arity);
        if entry != arity {
            self.arity_conflicts.push((name.to_string(), arity, entry));
        }
    }

    fn note_psym(&mut self, name: &str, arity: usize) {
        let entry = *self.psyms.entry(name.to_string()).or_insert(arity);
        if entry != arity {
            self.arity_conflicts.push((name.to_string(), arity, entry));
        }
    }

    fn absorb_instruction(&mut self, instr: &Instruction) {
        match &instr.kind {
            InstrKind::Assign { target, rhs, .. } => {
                self.absorb_variable(target);
                match rhs {
                    AssignRhs::Apply { fsym, args } => {
                        if !fsym.starts_with('$') {
                            self.note_fsym(fsym, args.len());
                        }
                        for a in args {
                            self.absorb_arg(a);
                        }
                    }
                    AssignRhs::Affine(a) => {
                        for v in a.vars() {
                            self.simple_vars.insert(v.to_string());
                        }
                    }
                    AssignRhs::LabelLit(_) => {}
                }
            }
            InstrKind::Cond { psym, args, .. } => {
                if !psym.starts_with('$') {
                    self.note_psym(psym, args.len());
                }
                for a in args {
                    self.absorb_arg(a);
                }
            }
            InstrKind::Loop { cond, .. } => match cond {
                LoopCond::While { psym, args } => {
                    if !psym.starts_with('$') {
                        self.note_psym(psym, args.len());
                    }
                    for a in args {
                        self.absorb_arg(a);
                    }
                }
                LoopCond::Counter { var, lo, hi } => {
                    self.simple_vars.insert(var.clone());
                    for v in lo.vars().chain(hi.vars()) {
                        self.simple_vars.insert(v.to_string());
                    }
                }
            },
            InstrKind::Call { .. } => {}
        }
    }
}
