//! Forward orientation: no instruction may overwrite an index variable of
//! an earlier instruction on the same branch.
//!
//! The repairing transform snapshots each offending index variable into a
//! fresh variable right before the reading instruction (`newE = E`) and
//! renames the index positions to the snapshot. A loop or call body that
//! itself rewrites the variable is alpha-renamed wholesale, with the value
//! copied back after the body so later readers still see it.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::schema::{
    AffineExpr, Arg, AssignRhs, GeneralExpr, IndexExpr, InstrKind, Instruction, Label, LoopCond,
    Schema, Variable,
};

use super::{block_edges, reachable_from, NameAlloc};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForwardViolation {
    pub scope: String,
    /// Instruction whose index variable is clobbered later.
    pub user: Label,
    pub var: String,
    /// The later instruction writing the variable.
    pub writer: Label,
}

/// All forward-orientation violations, per block.
pub fn forward_violations(schema: &Schema) -> Vec<ForwardViolation> {
    let mut out = Vec::new();
    for (scope, block) in schema.all_schemas() {
        collect_block_violations(schema, block, scope, &mut out);
    }
    out
}

/// True iff no instruction with a larger label writes an index variable of
/// an earlier instruction on the same branch.
pub fn check_forward(schema: &Schema) -> bool {
    forward_violations(schema).is_empty()
}

fn collect_block_violations(
    root: &Schema,
    block: &Schema,
    scope: &str,
    out: &mut Vec<ForwardViolation>,
) {
    let edges = block_edges(block);
    for instr in &block.opers {
        let sets = crate::schema::var_sets(root, instr);
        let ind = sets.ind_names();
        if ind.is_empty() {
            continue;
        }
        let mut later = reachable_from(&edges, &instr.label);
        later.remove(&instr.label);
        for writer_label in &later {
            let writer = block.instr(writer_label).expect("edge target exists");
            let writes = crate::schema::var_sets(root, writer).val_simple_names();
            for var in ind.intersection(&writes) {
                out.push(ForwardViolation {
                    scope: scope.to_string(),
                    user: instr.label.clone(),
                    var: var.clone(),
                    writer: writer_label.clone(),
                });
            }
        }
    }
}

/// Make a schema forward oriented. Idempotent; the result is t-equal to
/// the input.
pub fn forward_orient(schema: &Schema) -> Schema {
    let mut root = schema.clone();
    let mut alloc = NameAlloc::for_schema(schema);
    // Fix one block per round, innermost first, until clean. Renames inside
    // a body can shift a violation onto a fresh name; the next round picks
    // it up.
    for _ in 0..10_000 {
        let paths = block_paths_post_order(&root);
        let mut fixed_any = false;
        for path in paths {
            let block = block_at(&root, &path).expect("path valid");
            let mut violations = Vec::new();
            collect_block_violations(&root, block, &path.join("/"), &mut violations);
            if violations.is_empty() {
                continue;
            }
            let plan = plan_for_block(&root, block, &violations);
            let rebuilt = apply_plan(&root, block, plan, &mut alloc);
            *block_at_mut(&mut root, &path).expect("path valid") = rebuilt;
            fixed_any = true;
            break;
        }
        if !fixed_any {
            return root;
        }
    }
    root
}

/// Paths to every block, innermost first.
fn block_paths_post_order(root: &Schema) -> Vec<Vec<String>> {
    fn walk(s: &Schema, prefix: Vec<String>, out: &mut Vec<Vec<String>>) {
        for (name, p) in &s.procs {
            let mut path = prefix.clone();
            path.push(name.clone());
            walk(p, path, out);
        }
        out.push(prefix);
    }
    let mut out = Vec::new();
    walk(root, Vec::new(), &mut out);
    out
}

fn block_at<'a>(root: &'a Schema, path: &[String]) -> Option<&'a Schema> {
    let mut s = root;
    for name in path {
        s = s.procs.get(name)?;
    }
    Some(s)
}

fn block_at_mut<'a>(root: &'a mut Schema, path: &[String]) -> Option<&'a mut Schema> {
    let mut s = root;
    for name in path {
        s = s.procs.get_mut(name)?;
    }
    Some(s)
}

struct InstrPlan {
    /// Offending index variables, in name order.
    vars: Vec<String>,
    /// For loop/call instructions: does the body itself write the variable?
    body_writes: BTreeMap<String, bool>,
}

fn plan_for_block(
    root: &Schema,
    block: &Schema,
    violations: &[ForwardViolation],
) -> BTreeMap<Label, InstrPlan> {
    let mut plan: BTreeMap<Label, InstrPlan> = BTreeMap::new();
    for v in violations {
        let entry = plan.entry(v.user.clone()).or_insert_with(|| InstrPlan {
            vars: Vec::new(),
            body_writes: BTreeMap::new(),
        });
        if !entry.vars.contains(&v.var) {
            entry.vars.push(v.var.clone());
        }
    }
    for (label, entry) in &mut plan {
        entry.vars.sort();
        let instr = block.instr(label).expect("violating label exists");
        if instr.body_proc().is_some() {
            let sets = crate::schema::var_sets(root, instr);
            let writes = sets.val_simple_names();
            for var in &entry.vars {
                entry.body_writes.insert(var.clone(), writes.contains(var));
            }
        }
    }
    plan
}

fn apply_plan(
    root: &Schema,
    block: &Schema,
    plan: BTreeMap<Label, InstrPlan>,
    alloc: &mut NameAlloc,
) -> Schema {
    let mut opers: Vec<Instruction> = Vec::new();
    let mut procs = block.procs.clone();

    for instr in &block.opers {
        let Some(entry) = plan.get(&instr.label) else {
            opers.push(instr.clone());
            continue;
        };
        let mut current = instr.clone();
        let mut copies: Vec<(String, String)> = Vec::new(); // (fresh, original)
        let mut restores: Vec<(String, String)> = Vec::new(); // (original, fresh)

        for var in &entry.vars {
            let fresh = alloc.fresh("newE_");
            copies.push((fresh.clone(), var.clone()));
            match &current.kind {
                InstrKind::Assign { .. } | InstrKind::Cond { .. } => {
                    rename_index_in_instr(&mut current, var, &fresh);
                }
                InstrKind::Loop { .. } | InstrKind::Call { .. } => {
                    let body_name = current.body_proc().expect("loop/call").to_string();
                    let owned = ensure_local_proc(root, &mut procs, &body_name, alloc);
                    if owned != body_name {
                        retarget_body(&mut current, &owned);
                    }
                    let body = procs.get_mut(&owned).expect("local body");
                    if entry.body_writes.get(var).copied().unwrap_or(false) {
                        // The body rewrites the variable: alpha-rename it
                        // throughout (including the loop's own predicate
                        // arguments, which must see the per-pass value) and
                        // copy the final value back after the loop.
                        alpha_rename_block(body, var, &fresh);
                        alpha_rename_instr(&mut current, var, &fresh);
                        restores.push((var.clone(), fresh.clone()));
                    } else {
                        rename_index_in_block(body, var, &fresh);
                        rename_index_in_instr(&mut current, var, &fresh);
                    }
                }
            }
        }

        // Wire up: original label -> copies -> instruction -> restores.
        let mut labels: Vec<Label> = vec![instr.label.clone()];
        for _ in 1..copies.len() {
            labels.push(Label::new(alloc.fresh("m_aux")));
        }
        let instr_label = Label::new(alloc.fresh("m_aux"));
        labels.push(instr_label.clone());
        for (i, (fresh, original)) in copies.iter().enumerate() {
            opers.push(Instruction {
                label: labels[i].clone(),
                kind: InstrKind::Assign {
                    target: Variable::simple(fresh.clone()),
                    rhs: AssignRhs::Affine(AffineExpr::var(original.clone())),
                    next: labels[i + 1].clone(),
                },
            });
        }
        current.label = instr_label;

        if restores.is_empty() {
            opers.push(current);
        } else {
            // Single-successor forms only (loop/call).
            let next = current.out_labels()[0].clone();
            let mut restore_labels: Vec<Label> = Vec::new();
            for _ in 0..restores.len() {
                restore_labels.push(Label::new(alloc.fresh("m_aux")));
            }
            current.map_out_labels(|_| restore_labels[0].clone());
            opers.push(current);
            for (i, (original, fresh)) in restores.iter().enumerate() {
                let after = restore_labels
                    .get(i + 1)
                    .cloned()
                    .unwrap_or_else(|| next.clone());
                opers.push(Instruction {
                    label: restore_labels[i].clone(),
                    kind: InstrKind::Assign {
                        target: Variable::simple(original.clone()),
                        rhs: AssignRhs::Affine(AffineExpr::var(fresh.clone())),
                        next: after,
                    },
                });
            }
        }
    }

    Schema {
        opers,
        start: block.start.clone(),
        fin: block.fin.clone(),
        procs,
    }
}

/// Bodies declared in an enclosing scope are copied into this block before
/// being renamed, so the shared original stays untouched.
fn ensure_local_proc(
    root: &Schema,
    procs: &mut BTreeMap<String, Schema>,
    name: &str,
    alloc: &mut NameAlloc,
) -> String {
    if procs.contains_key(name) {
        return name.to_string();
    }
    let original = root
        .find_proc(name)
        .expect("validated schema resolves bodies")
        .clone();
    let fresh = alloc.fresh("OrientBody");
    procs.insert(fresh.clone(), original);
    fresh
}

fn retarget_body(instr: &mut Instruction, new_name: &str) {
    match &mut instr.kind {
        InstrKind::Loop { body, .. } | InstrKind::Call { body, .. } => {
            *body = new_name.to_string();
        }
        _ => {}
    }
}

fn rename_in_affine(a: &mut AffineExpr, from: &str, to: &str) {
    if let Some(c) = a.coeffs.remove(from) {
        let entry = a.coeffs.entry(to.to_string()).or_insert(0);
        *entry += c;
        if *entry == 0 {
            a.coeffs.remove(to);
        }
    }
}

fn rename_in_general(g: &mut GeneralExpr, from: &str, to: &str) {
    match g {
        GeneralExpr::Const(_) => {}
        GeneralExpr::Var(v) => {
            if v == from {
                *v = to.to_string();
            }
        }
        GeneralExpr::Apply(_, args) => {
            for a in args {
                if a == from {
                    *a = to.to_string();
                }
            }
        }
        GeneralExpr::Add(x, y) | GeneralExpr::Sub(x, y) | GeneralExpr::Mul(x, y) => {
            rename_in_general(x, from, to);
            rename_in_general(y, from, to);
        }
    }
}

fn rename_index_in_variable(v: &mut Variable, from: &str, to: &str) {
    if let Variable::Indexed { indexes, .. } = v {
        for e in indexes {
            match e {
                IndexExpr::Affine(a) => rename_in_affine(a, from, to),
                IndexExpr::General(g) => rename_in_general(g, from, to),
            }
        }
    }
}

fn rename_index_in_args(args: &mut [Arg], from: &str, to: &str) {
    for a in args {
        if let Arg::Var(v) = a {
            rename_index_in_variable(v, from, to);
        }
    }
}

/// Rename a variable only where it appears inside index brackets.
fn rename_index_in_instr(instr: &mut Instruction, from: &str, to: &str) {
    match &mut instr.kind {
        InstrKind::Assign { target, rhs, .. } => {
            rename_index_in_variable(target, from, to);
            if let AssignRhs::Apply { args, .. } = rhs {
                rename_index_in_args(args, from, to);
            }
        }
        InstrKind::Cond { args, .. } => rename_index_in_args(args, from, to),
        InstrKind::Loop { cond, .. } => {
            if let LoopCond::While { args, .. } = cond {
                rename_index_in_args(args, from, to);
            }
        }
        InstrKind::Call { .. } => {}
    }
}

fn rename_index_in_block(block: &mut Schema, from: &str, to: &str) {
    for instr in &mut block.opers {
        rename_index_in_instr(instr, from, to);
    }
    for p in block.procs.values_mut() {
        rename_index_in_block(p, from, to);
    }
}

fn alpha_rename_var(v: &mut Variable, from: &str, to: &str) {
    match v {
        Variable::Simple(name) => {
            if name == from {
                *name = to.to_string();
            }
        }
        Variable::Indexed { .. } => rename_index_in_variable(v, from, to),
    }
}

fn alpha_rename_args(args: &mut [Arg], from: &str, to: &str) {
    for a in args {
        if let Arg::Var(v) = a {
            alpha_rename_var(v, from, to);
        }
    }
}

/// Rename every occurrence of a simple variable in one instruction: reads,
/// writes, and index positions.
fn alpha_rename_instr(instr: &mut Instruction, from: &str, to: &str) {
    match &mut instr.kind {
        InstrKind::Assign { target, rhs, .. } => {
            alpha_rename_var(target, from, to);
            match rhs {
                AssignRhs::Apply { args, .. } => alpha_rename_args(args, from, to),
                AssignRhs::Affine(a) => rename_in_affine(a, from, to),
                AssignRhs::LabelLit(_) => {}
            }
        }
        InstrKind::Cond { args, .. } => alpha_rename_args(args, from, to),
        InstrKind::Loop { cond, .. } => match cond {
            LoopCond::While { args, .. } => alpha_rename_args(args, from, to),
            LoopCond::Counter { var, lo, hi } => {
                if var == from {
                    *var = to.to_string();
                }
                rename_in_affine(lo, from, to);
                rename_in_affine(hi, from, to);
            }
        },
        InstrKind::Call { .. } => {}
    }
}

/// Rename every occurrence of a simple variable throughout a block.
fn alpha_rename_block(block: &mut Schema, from: &str, to: &str) {
    for instr in &mut block.opers {
        alpha_rename_instr(instr, from, to);
    }
    for p in block.procs.values_mut() {
        alpha_rename_block(p, from, to);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{t_equal_check, TEqualConfig};
    use crate::text::{parse_schema, pretty_print};

    #[test]
    fn clean_schema_is_untouched() {
        let s =
            parse_schema("final lf;\nl1: x = f(a[i]) then l2;\nl2: y = g(x) then lf;\n").unwrap();
        assert!(check_forward(&s));
        assert_eq!(forward_orient(&s), s);
    }

    #[test]
    fn snapshot_inserted_before_clobbered_index_use() {
        let text = "final lf;\nl1: x1 = f(xar[E]) then l2;\nl2: E = g(E) then lf;\n";
        let s = parse_schema(text).unwrap();
        assert!(!check_forward(&s));
        let t = forward_orient(&s);
        assert!(check_forward(&t), "{}", pretty_print(&t));
        assert_eq!(t, forward_orient(&t));
        let verdict = t_equal_check(&s, &t, TEqualConfig::default()).unwrap();
        assert!(!verdict.is_counterexample(), "{verdict:?}");
        // The snapshot takes over the original label.
        let first = t.instr(&Label::new("l1")).unwrap();
        match &first.kind {
            InstrKind::Assign { target, rhs, .. } => {
                assert_eq!(target, &Variable::simple("newE_1"));
                assert_eq!(rhs, &AssignRhs::Affine(AffineExpr::var("E")));
            }
            other => panic!("expected copy, got {other:?}"),
        }
    }

    #[test]
    fn two_offending_index_variables_get_two_snapshots() {
        let text = "final lf;\nl1: x = f(a[i], b[j]) then l2;\nl2: i = g(i) then l3;\nl3: j = g(j) then lf;\n";
        let s = parse_schema(text).unwrap();
        let t = forward_orient(&s);
        assert!(check_forward(&t), "{}", pretty_print(&t));
        assert_eq!(t, forward_orient(&t));
        let names = t.symbols().simple_vars;
        assert!(names.contains("newE_1") && names.contains("newE_2"));
        let verdict = t_equal_check(&s, &t, TEqualConfig::default()).unwrap();
        assert!(!verdict.is_counterexample(), "{verdict:?}");
    }

    #[test]
    fn loop_body_reading_clobbered_index_is_snapshotted() {
        let text = "final lf;\nl1: do B while p(x) then l2;\nl2: E = g(E) then lf;\nproc B {\n  final bf;\n  b1: x = f(a[E], x) then bf;\n}\n";
        let s = parse_schema(text).unwrap();
        let t = forward_orient(&s);
        assert!(check_forward(&t), "{}", pretty_print(&t));
        let verdict = t_equal_check(&s, &t, TEqualConfig::default()).unwrap();
        assert!(!verdict.is_counterexample(), "{verdict:?}");
    }

    #[test]
    fn loop_body_that_also_writes_the_index_is_alpha_renamed_with_restore() {
        let text = "final lf;\nl1: do B while p(E) then l2;\nl2: E = g(E) then lf;\nproc B {\n  final bf;\n  b1: x = f(a[E], x) then b2;\n  b2: E = h(E) then bf;\n}\n";
        let s = parse_schema(text).unwrap();
        let t = forward_orient(&s);
        assert!(check_forward(&t), "{}", pretty_print(&t));
        assert_eq!(t, forward_orient(&t));
        let verdict = t_equal_check(&s, &t, TEqualConfig::default()).unwrap();
        assert!(!verdict.is_counterexample(), "{verdict:?}");
    }
}
