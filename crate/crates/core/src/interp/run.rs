//! The schema executor, shared by the concrete and Herbrand modes.

use crate::schema::{
    AffineExpr, Arg, AssignRhs, GeneralExpr, IndexExpr, InstrKind, Label, LoopCond, Schema,
    Variable,
};

use super::herbrand::Diagram;
use super::{CellId, Interpretation, Memory, Outcome, RunStatus, Term, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// One logged cell access: which cell, at which instruction, and the
/// active counted-loop iteration vector (outermost first).
#[derive(Debug, Clone)]
pub struct AccessEvent {
    pub kind: AccessKind,
    pub cell: CellId,
    pub label: Label,
    pub iter: Vec<i64>,
}

/// Chronological log of instruction-level cell accesses. Interpreted
/// counter bookkeeping is not logged.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub events: Vec<AccessEvent>,
}

/// Execute under a concrete interpretation.
pub fn run(schema: &Schema, interp: &Interpretation, fuel: u64) -> Outcome {
    exec(
        schema,
        Mode::Concrete(interp),
        interp.start_memory.clone(),
        fuel,
        None,
    )
}

/// Execute under a concrete interpretation, logging cell accesses.
pub fn run_traced(
    schema: &Schema,
    interp: &Interpretation,
    fuel: u64,
    trace: &mut Trace,
) -> Outcome {
    exec(
        schema,
        Mode::Concrete(interp),
        interp.start_memory.clone(),
        fuel,
        Some(trace),
    )
}

/// Execute under the Herbrand interpretation: start memory maps every cell
/// to its own symbolic value and predicates resolve through the diagram.
pub fn herbrand_run(schema: &Schema, diagram: &Diagram, fuel: u64) -> Outcome {
    exec(
        schema,
        Mode::Herbrand(diagram),
        Memory::herbrand(),
        fuel,
        None,
    )
}

/// Herbrand execution with explicit start-memory overrides (for counted
/// loop bounds) and optional tracing.
pub fn herbrand_run_with(
    schema: &Schema,
    diagram: &Diagram,
    start: Memory,
    fuel: u64,
    trace: Option<&mut Trace>,
) -> Outcome {
    exec(schema, Mode::Herbrand(diagram), start, fuel, trace)
}

enum Mode<'a> {
    Concrete(&'a Interpretation),
    Herbrand(&'a Diagram),
}

enum Stop {
    OutOfFuel,
    Undefined(String),
}

type Step<T> = Result<T, Stop>;

fn exec(
    schema: &Schema,
    mode: Mode<'_>,
    memory: Memory,
    fuel: u64,
    trace: Option<&mut Trace>,
) -> Outcome {
    let mut state = Exec {
        mode,
        memory,
        fuel_left: fuel,
        steps: 0,
        trace,
        counters: Vec::new(),
        current_label: schema.start.clone(),
    };
    let result = state.run_block(&[schema]);
    let (status, reason) = match result {
        Ok(()) => (RunStatus::Final, None),
        Err(Stop::OutOfFuel) => (RunStatus::OutOfFuel, None),
        Err(Stop::Undefined(reason)) => (RunStatus::Undefined, Some(reason)),
    };
    Outcome {
        status,
        memory: state.memory,
        steps: state.steps,
        reason,
    }
}

struct Exec<'a> {
    mode: Mode<'a>,
    memory: Memory,
    fuel_left: u64,
    steps: u64,
    trace: Option<&'a mut Trace>,
    counters: Vec<(String, i64)>,
    current_label: Label,
}

impl<'a> Exec<'a> {
    fn consume_fuel(&mut self) -> Step<()> {
        if self.fuel_left == 0 {
            return Err(Stop::OutOfFuel);
        }
        self.fuel_left -= 1;
        self.steps += 1;
        Ok(())
    }

    fn log(&mut self, kind: AccessKind, cell: CellId) {
        if let Some(trace) = self.trace.as_mut() {
            trace.events.push(AccessEvent {
                kind,
                cell,
                label: self.current_label.clone(),
                iter: self.counters.iter().map(|(_, v)| *v).collect(),
            });
        }
    }

    fn resolve_proc<'b>(&self, chain: &[&'b Schema], name: &str) -> Step<Vec<&'b Schema>> {
        for (i, s) in chain.iter().enumerate().rev() {
            if let Some(p) = s.procs.get(name) {
                let mut sub = chain[..=i].to_vec();
                sub.push(p);
                return Ok(sub);
            }
        }
        Err(Stop::Undefined(format!("procedure {name} is not in scope")))
    }

    fn run_block(&mut self, chain: &[&Schema]) -> Step<()> {
        let s = *chain.last().expect("non-empty scope chain");
        let mut current = s.start.clone();
        while current != s.fin {
            let instr = s
                .instr(&current)
                .ok_or_else(|| Stop::Undefined(format!("no instruction at label {current}")))?
                .clone();
            self.consume_fuel()?;
            self.current_label = instr.label.clone();
            match &instr.kind {
                InstrKind::Assign { target, rhs, next } => {
                    let value = self.eval_rhs(rhs)?;
                    let cell = self.resolve_cell(target)?;
                    self.log(AccessKind::Write, cell.clone());
                    self.memory.set(cell, value);
                    current = next.clone();
                }
                InstrKind::Cond {
                    psym,
                    args,
                    then_label,
                    else_label,
                } => {
                    let vals = self.eval_args(args)?;
                    let truth = self.eval_pred(psym, &vals)?;
                    current = if truth { then_label } else { else_label }.clone();
                }
                InstrKind::Call { body, next } => {
                    let sub = self.resolve_proc(chain, body)?;
                    self.run_block(&sub)?;
                    current = next.clone();
                }
                InstrKind::Loop { body, cond, next } => {
                    match cond {
                        LoopCond::While { psym, args } => loop {
                            let sub = self.resolve_proc(chain, body)?;
                            self.run_block(&sub)?;
                            self.current_label = instr.label.clone();
                            let vals = self.eval_args(args)?;
                            if !self.eval_pred(psym, &vals)? {
                                break;
                            }
                            self.consume_fuel()?;
                        },
                        LoopCond::Counter { var, lo, hi } => {
                            let lo_v = self.eval_affine_int(lo)?;
                            let hi_v = self.eval_affine_int(hi)?;
                            let mut v = lo_v;
                            self.memory.set_simple(var, Value::Int(v));
                            let mut first = true;
                            while v < hi_v {
                                if !first {
                                    self.consume_fuel()?;
                                }
                                first = false;
                                self.counters.push((var.clone(), v));
                                let sub = self.resolve_proc(chain, body)?;
                                let result = self.run_block(&sub);
                                self.counters.pop();
                                result?;
                                v = v.checked_add(1).ok_or_else(|| {
                                    Stop::Undefined(format!("counter {var} overflowed"))
                                })?;
                                // The counter is machinery-owned: body writes
                                // to it do not survive a pass.
                                self.memory.set_simple(var, Value::Int(v));
                                self.current_label = instr.label.clone();
                            }
                        }
                    }
                    current = next.clone();
                }
            }
        }
        Ok(())
    }

    fn eval_rhs(&mut self, rhs: &AssignRhs) -> Step<Value> {
        match rhs {
            AssignRhs::Apply { fsym, args } => {
                let vals = self.eval_args(args)?;
                self.apply_function(fsym, &vals)
            }
            // A plain copy preserves the value whatever its kind; label
            // tokens in particular must survive `x = y`.
            AssignRhs::Affine(a) => match a.as_plain_var() {
                Some(v) => self.read_simple(v, true),
                None => self.eval_affine(a, true),
            },
            AssignRhs::LabelLit(l) => Ok(Value::Label(l.clone())),
        }
    }

    fn apply_function(&mut self, fsym: &str, args: &[Value]) -> Step<Value> {
        if fsym.starts_with('$') {
            return Err(Stop::Undefined(format!("unknown builtin function {fsym}")));
        }
        match self.mode {
            Mode::Concrete(interp) => match interp.function(fsym) {
                Some(f) => f.apply(fsym, args).ok_or_else(|| {
                    let rendered: Vec<String> = args.iter().map(|v| v.to_string()).collect();
                    Stop::Undefined(format!(
                        "function {fsym} has no value on ({})",
                        rendered.join(", ")
                    ))
                }),
                None => Err(Stop::Undefined(format!(
                    "no interpretation for function {fsym}"
                ))),
            },
            Mode::Herbrand(_) => Ok(Value::Term(Term::App(
                fsym.to_string(),
                args.iter().map(Value::to_term).collect(),
            ))),
        }
    }

    fn eval_pred(&mut self, psym: &str, args: &[Value]) -> Step<bool> {
        match psym {
            "$eq" | "$ne" => {
                if args.len() != 2 {
                    return Err(Stop::Undefined(format!("{psym} expects two arguments")));
                }
                let eq = args[0] == args[1];
                Ok(if psym == "$eq" { eq } else { !eq })
            }
            _ if psym.starts_with('$') => {
                Err(Stop::Undefined(format!("unknown builtin predicate {psym}")))
            }
            _ => match self.mode {
                Mode::Concrete(interp) => match interp.predicate(psym) {
                    Some(p) => p
                        .query(psym, args)
                        .ok_or_else(|| Stop::Undefined(format!("predicate {psym} has no value"))),
                    None => Err(Stop::Undefined(format!(
                        "no interpretation for predicate {psym}"
                    ))),
                },
                Mode::Herbrand(diagram) => {
                    let terms: Vec<Term> = args.iter().map(Value::to_term).collect();
                    diagram.lookup(psym, &terms).ok_or_else(|| {
                        let rendered: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                        Stop::Undefined(format!(
                            "diagram has no entry for {psym}({})",
                            rendered.join(", ")
                        ))
                    })
                }
            },
        }
    }

    fn eval_args(&mut self, args: &[Arg]) -> Step<Vec<Value>> {
        args.iter()
            .map(|a| match a {
                Arg::Var(v) => self.read_variable(v),
                Arg::Int(n) => Ok(Value::Int(*n)),
                Arg::LabelLit(l) => Ok(Value::Label(l.clone())),
            })
            .collect()
    }

    fn read_variable(&mut self, v: &Variable) -> Step<Value> {
        let cell = self.resolve_cell(v)?;
        self.log(AccessKind::Read, cell.clone());
        self.memory
            .read(&cell)
            .ok_or_else(|| Stop::Undefined(format!("argument {cell} empty")))
    }

    fn read_simple(&mut self, name: &str, log: bool) -> Step<Value> {
        let cell = CellId::Simple(name.to_string());
        if log {
            self.log(AccessKind::Read, cell.clone());
        }
        self.memory
            .read(&cell)
            .ok_or_else(|| Stop::Undefined(format!("argument {name} empty")))
    }

    fn resolve_cell(&mut self, v: &Variable) -> Step<CellId> {
        match v {
            Variable::Simple(name) => Ok(CellId::Simple(name.clone())),
            Variable::Indexed { array, indexes } => {
                let mut resolved = Vec::with_capacity(indexes.len());
                for e in indexes {
                    resolved.push(self.eval_index(e)?);
                }
                Ok(CellId::Arr(array.clone(), resolved))
            }
        }
    }

    fn eval_index(&mut self, e: &IndexExpr) -> Step<Value> {
        let value = match e {
            IndexExpr::Affine(a) => self.eval_affine(a, true)?,
            IndexExpr::General(g) => self.eval_general(g)?,
        };
        if matches!(self.mode, Mode::Concrete(_)) && value.as_int().is_none() {
            return Err(Stop::Undefined(
                "index expression did not evaluate to an integer".to_string(),
            ));
        }
        if let Value::Label(_) = value {
            return Err(Stop::Undefined("label value used as an index".to_string()));
        }
        Ok(value)
    }

    /// Affine evaluation: integer arithmetic when every variable holds an
    /// integer, a symbolic term as soon as one does not (Herbrand mode).
    fn eval_affine(&mut self, a: &AffineExpr, log: bool) -> Step<Value> {
        let mut vals = Vec::with_capacity(a.coeffs.len());
        for (v, c) in &a.coeffs {
            vals.push((v.clone(), *c, self.read_simple(v, log)?));
        }
        if vals.iter().all(|(_, _, val)| val.as_int().is_some()) {
            let mut acc: i64 = a.constant;
            for (_, c, val) in &vals {
                let term = val
                    .as_int()
                    .unwrap()
                    .checked_mul(*c)
                    .ok_or_else(|| Stop::Undefined("integer overflow".to_string()))?;
                acc = acc
                    .checked_add(term)
                    .ok_or_else(|| Stop::Undefined("integer overflow".to_string()))?;
            }
            return Ok(Value::Int(acc));
        }
        if matches!(self.mode, Mode::Concrete(_)) {
            let bad = vals
                .iter()
                .find(|(_, _, val)| val.as_int().is_none())
                .map(|(v, _, _)| v.clone())
                .unwrap_or_default();
            return Err(Stop::Undefined(format!("{bad} is not an integer")));
        }
        if vals
            .iter()
            .any(|(_, _, val)| matches!(val, Value::Label(_)))
        {
            return Err(Stop::Undefined(
                "label value used in arithmetic".to_string(),
            ));
        }
        // Canonical symbolic sum: constant first, terms in name order.
        let mut acc: Option<Term> = if a.constant != 0 || vals.is_empty() {
            Some(Term::int(a.constant))
        } else {
            None
        };
        for (_, c, val) in &vals {
            let t = val.to_term();
            let part = if *c == 1 {
                t
            } else {
                Term::App("mul".to_string(), vec![Term::int(*c), t])
            };
            acc = Some(match acc {
                None => part,
                Some(prev) => Term::App("add".to_string(), vec![prev, part]),
            });
        }
        Ok(Value::Term(acc.expect("at least one summand")))
    }

    fn eval_affine_int(&mut self, a: &AffineExpr) -> Step<i64> {
        let v = self.eval_affine(a, false)?;
        v.as_int()
            .ok_or_else(|| Stop::Undefined("loop bound did not evaluate to an integer".to_string()))
    }

    fn eval_general(&mut self, g: &GeneralExpr) -> Step<Value> {
        match g {
            GeneralExpr::Const(n) => Ok(Value::Int(*n)),
            GeneralExpr::Var(v) => self.read_simple(v, true),
            GeneralExpr::Apply(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for v in args {
                    vals.push(self.read_simple(v, true)?);
                }
                self.apply_function(f, &vals)
            }
            GeneralExpr::Add(x, y) => self.general_arith(x, y, "add"),
            GeneralExpr::Sub(x, y) => self.general_arith(x, y, "sub"),
            GeneralExpr::Mul(x, y) => self.general_arith(x, y, "mul"),
        }
    }

    fn general_arith(&mut self, x: &GeneralExpr, y: &GeneralExpr, op: &str) -> Step<Value> {
        let a = self.eval_general(x)?;
        let b = self.eval_general(y)?;
        match (a.as_int(), b.as_int()) {
            (Some(m), Some(n)) => {
                let r = match op {
                    "add" => m.checked_add(n),
                    "sub" => m.checked_sub(n),
                    _ => m.checked_mul(n),
                };
                r.map(Value::Int)
                    .ok_or_else(|| Stop::Undefined("integer overflow".to_string()))
            }
            _ => {
                if matches!(self.mode, Mode::Concrete(_)) {
                    return Err(Stop::Undefined(
                        "arithmetic on a non-integer value".to_string(),
                    ));
                }
                if matches!(a, Value::Label(_)) || matches!(b, Value::Label(_)) {
                    return Err(Stop::Undefined(
                        "label value used in arithmetic".to_string(),
                    ));
                }
                Ok(Value::Term(Term::App(
                    op.to_string(),
                    vec![a.to_term(), b.to_term()],
                )))
            }
        }
    }
}
