//! The Ind/Arg/Val variable-set calculus.
//!
//! For an instruction, `ind` collects the simple variables used in index
//! positions, `arg` the argument variables (plus `ind`), and `val` the
//! written variables. Membership is syntactic: an array write is identified
//! by its array name and index expressions, not by a runtime cell. Loop and
//! call instructions union the sets of their body, and a loop additionally
//! contributes the index variables of its predicate arguments.

use std::collections::BTreeSet;

use super::{Arg, AssignRhs, InstrKind, Instruction, LoopCond, Schema, Variable};

/// Index, argument, and value variable sets of an instruction or schema.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarSets {
    pub ind: BTreeSet<Variable>,
    pub arg: BTreeSet<Variable>,
    pub val: BTreeSet<Variable>,
}

impl VarSets {
    pub fn union_with(&mut self, other: &VarSets) {
        self.ind.extend(other.ind.iter().cloned());
        self.arg.extend(other.arg.iter().cloned());
        self.val.extend(other.val.iter().cloned());
    }

    /// Simple-variable names in `ind`.
    pub fn ind_names(&self) -> BTreeSet<String> {
        self.ind
            .iter()
            .filter_map(|v| match v {
                Variable::Simple(n) => Some(n.clone()),
                Variable::Indexed { .. } => None,
            })
            .collect()
    }

    /// Simple-variable names written (array writes excluded).
    pub fn val_simple_names(&self) -> BTreeSet<String> {
        self.val
            .iter()
            .filter_map(|v| match v {
                Variable::Simple(n) => Some(n.clone()),
                Variable::Indexed { .. } => None,
            })
            .collect()
    }
}

fn add_index_vars(var: &Variable, sets: &mut VarSets) {
    for name in var.index_vars() {
        sets.ind.insert(Variable::Simple(name));
    }
}

fn add_arg(arg: &Arg, sets: &mut VarSets) {
    if let Arg::Var(v) = arg {
        sets.arg.insert(v.clone());
        add_index_vars(v, sets);
    }
}

/// Ind/Arg/Val sets of a single instruction. For loops and calls the body
/// is resolved against `scope`, the schema the instruction belongs to.
pub fn var_sets(scope: &Schema, instr: &Instruction) -> VarSets {
    let mut sets = VarSets::default();
    match &instr.kind {
        InstrKind::Assign { target, rhs, .. } => {
            add_index_vars(target, &mut sets);
            sets.val.insert(target.clone());
            match rhs {
                AssignRhs::Apply { args, .. } => {
                    for a in args {
                        add_arg(a, &mut sets);
                    }
                }
                AssignRhs::Affine(e) => {
                    for v in e.vars() {
                        sets.arg.insert(Variable::Simple(v.to_string()));
                    }
                }
                AssignRhs::LabelLit(_) => {}
            }
        }
        InstrKind::Cond { args, .. } => {
            for a in args {
                add_arg(a, &mut sets);
            }
        }
        InstrKind::Call { body, .. } => {
            if let Some(proc) = scope.find_proc(body) {
                sets.union_with(&var_sets_schema_in(scope, proc));
            }
        }
        InstrKind::Loop { body, cond, .. } => {
            if let Some(proc) = scope.find_proc(body) {
                sets.union_with(&var_sets_schema_in(scope, proc));
            }
            match cond {
                LoopCond::While { args, .. } => {
                    for a in args {
                        add_arg(a, &mut sets);
                    }
                }
                LoopCond::Counter { var, lo, hi } => {
                    // The interpreted counter is written by the loop itself;
                    // its bound variables are read.
                    sets.val.insert(Variable::Simple(var.clone()));
                    for v in lo.vars().chain(hi.vars()) {
                        sets.arg.insert(Variable::Simple(v.to_string()));
                    }
                }
            }
        }
    }
    // ind is always part of arg.
    for v in sets.ind.iter().cloned().collect::<Vec<_>>() {
        sets.arg.insert(v);
    }
    sets
}

fn var_sets_schema_in(root: &Schema, s: &Schema) -> VarSets {
    let mut sets = VarSets::default();
    for instr in &s.opers {
        // Bodies resolve lexically outward, so keep using the root scope
        // for lookup; names are unique across the tree for valid schemas.
        sets.union_with(&var_sets(root, instr));
    }
    sets
}

/// Union of the per-instruction sets over all labels, including
/// sub-schemas.
pub fn var_sets_schema(schema: &Schema) -> VarSets {
    var_sets_schema_in(schema, schema)
}
