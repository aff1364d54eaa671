//! Loop-structure checks and goto elimination.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::schema::{AssignRhs, InstrKind, Instruction, Label, LoopCond, Schema, Variable};

use super::{block_edges, NameAlloc, NormalizeError};

/// A label-order violation: an edge that closes a cycle in the label graph
/// of one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderViolation {
    pub scope: String,
    pub label: Label,
    pub target: Label,
}

/// Everything that stops a schema from being loop-structured.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LViolations {
    pub order: Vec<OrderViolation>,
    /// Procedures contained in their own transitive sub-procedure set.
    pub recursion: Vec<String>,
}

impl LViolations {
    pub fn is_empty(&self) -> bool {
        self.order.is_empty() && self.recursion.is_empty()
    }
}

/// Check that "input label below output labels" is a partial order in
/// every block (no label cycles) and that no procedure is recursive.
pub fn check_l_schema(schema: &Schema) -> LViolations {
    let mut violations = LViolations::default();
    for (scope, block) in schema.all_schemas() {
        for (from, to) in cycle_edges(block) {
            violations.order.push(OrderViolation {
                scope: scope.to_string(),
                label: from,
                target: to,
            });
        }
    }
    violations.recursion = recursive_procs(schema);
    violations
}

/// Edges that close cycles, in deterministic discovery order.
fn cycle_edges(block: &Schema) -> Vec<(Label, Label)> {
    let edges = block_edges(block);
    let mut color: BTreeMap<&Label, u8> = BTreeMap::new(); // 0 white, 1 gray, 2 black
    let mut found = Vec::new();

    // Iterative DFS, visiting roots in definition order.
    for root in block.opers.iter().map(|i| &i.label) {
        if color.get(root).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(&Label, usize)> = vec![(root, 0)];
        color.insert(root, 1);
        while let Some((node, idx)) = stack.pop() {
            let succ = edges.get(node).map(|v| v.as_slice()).unwrap_or(&[]);
            if idx < succ.len() {
                stack.push((node, idx + 1));
                let next = &succ[idx];
                match color.get(next).copied().unwrap_or(0) {
                    0 => {
                        color.insert(next, 1);
                        stack.push((next, 0));
                    }
                    1 => found.push((node.clone(), next.clone())),
                    _ => {}
                }
            } else {
                color.insert(node, 2);
            }
        }
    }
    found
}

/// Procedures that reach themselves through the do-instruction call graph.
fn recursive_procs(schema: &Schema) -> Vec<String> {
    let mut calls: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (scope, block) in schema.all_schemas() {
        let entry = calls.entry(scope.to_string()).or_default();
        for instr in &block.opers {
            if let Some(body) = instr.body_proc() {
                entry.insert(body.to_string());
            }
        }
    }
    // Transitive closure over the small call graph.
    let names: Vec<String> = calls.keys().cloned().collect();
    let mut closed = calls.clone();
    loop {
        let mut changed = false;
        for name in &names {
            let current: BTreeSet<String> = closed.get(name).cloned().unwrap_or_default();
            let mut extended = current.clone();
            for callee in &current {
                if let Some(next) = closed.get(callee) {
                    extended.extend(next.iter().cloned());
                }
            }
            if extended.len() != current.len() {
                closed.insert(name.clone(), extended);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    names
        .into_iter()
        .filter(|n| !n.is_empty() && closed.get(n).map(|s| s.contains(n)).unwrap_or(false))
        .collect()
}

/// Transform a schema into a loop-structured one. Blocks whose label graph
/// is already acyclic are kept as they are; a cyclic block is encapsulated
/// in a single loop over an interpreted program counter holding the label
/// of the next instruction to execute. Recursion is rejected.
pub fn to_l_schema(schema: &Schema) -> Result<Schema, NormalizeError> {
    let recursion = recursive_procs(schema);
    if !recursion.is_empty() {
        return Err(NormalizeError::RecursionUnsupported(recursion.join(", ")));
    }
    let mut alloc = NameAlloc::for_schema(schema);
    Ok(transform_block(schema, &mut alloc))
}

fn transform_block(block: &Schema, alloc: &mut NameAlloc) -> Schema {
    let procs: BTreeMap<String, Schema> = block
        .procs
        .iter()
        .map(|(name, p)| (name.clone(), transform_block(p, alloc)))
        .collect();
    let base = Schema {
        opers: block.opers.clone(),
        start: block.start.clone(),
        fin: block.fin.clone(),
        procs,
    };
    if cycle_edges(&base).is_empty() {
        return base;
    }
    pc_encode(base, alloc)
}

/// Wrap a cyclic block in `do Body while $ne(pc, 'final)` where every
/// original instruction routes through `pc = 'target` setters and a
/// dispatch chain picks the instruction matching `pc`.
fn pc_encode(block: Schema, alloc: &mut NameAlloc) -> Schema {
    let pc = alloc.fresh("vPc");

    // Distinct jump targets in first-appearance order.
    let mut targets: Vec<Label> = Vec::new();
    for instr in &block.opers {
        for out in instr.out_labels() {
            if !targets.contains(out) {
                targets.push(out.clone());
            }
        }
    }
    let body_fin = Label::new(alloc.fresh("m_pcf"));
    let mut setter_label: BTreeMap<Label, Label> = BTreeMap::new();
    for t in &targets {
        setter_label.insert(t.clone(), Label::new(alloc.fresh("m_pcs")));
    }

    let mut body_opers: Vec<Instruction> = Vec::new();

    // Dispatch chain, one test per original instruction in order.
    let dispatch_labels: Vec<Label> = block
        .opers
        .iter()
        .map(|_| Label::new(alloc.fresh("m_pcd")))
        .collect();
    for (i, instr) in block.opers.iter().enumerate() {
        let else_label = dispatch_labels
            .get(i + 1)
            .cloned()
            .unwrap_or_else(|| body_fin.clone());
        body_opers.push(Instruction {
            label: dispatch_labels[i].clone(),
            kind: InstrKind::Cond {
                psym: "$eq".to_string(),
                args: vec![
                    crate::schema::Arg::Var(Variable::simple(pc.clone())),
                    crate::schema::Arg::LabelLit(instr.label.clone()),
                ],
                then_label: instr.label.clone(),
                else_label,
            },
        });
    }

    // Original instructions, rerouted through the setters.
    for instr in &block.opers {
        let mut instr = instr.clone();
        instr.map_out_labels(|l| setter_label[l].clone());
        body_opers.push(instr);
    }

    for t in &targets {
        body_opers.push(Instruction {
            label: setter_label[t].clone(),
            kind: InstrKind::Assign {
                target: Variable::simple(pc.clone()),
                rhs: AssignRhs::LabelLit(t.clone()),
                next: body_fin.clone(),
            },
        });
    }

    let body_name = alloc.fresh("PcBody");
    let body_schema = Schema {
        start: dispatch_labels
            .first()
            .cloned()
            .unwrap_or_else(|| body_fin.clone()),
        fin: body_fin,
        opers: body_opers,
        procs: BTreeMap::new(),
    };

    let init_label = Label::new(alloc.fresh("m_pct"));
    let loop_label = Label::new(alloc.fresh("m_pct"));
    let mut procs = block.procs;
    procs.insert(body_name.clone(), body_schema);
    Schema {
        opers: vec![
            Instruction {
                label: init_label.clone(),
                kind: InstrKind::Assign {
                    target: Variable::simple(pc.clone()),
                    rhs: AssignRhs::LabelLit(block.start.clone()),
                    next: loop_label.clone(),
                },
            },
            Instruction {
                label: loop_label,
                kind: InstrKind::Loop {
                    body: body_name,
                    cond: LoopCond::While {
                        psym: "$ne".to_string(),
                        args: vec![
                            crate::schema::Arg::Var(Variable::simple(pc)),
                            crate::schema::Arg::LabelLit(block.fin.clone()),
                        ],
                    },
                    next: block.fin.clone(),
                },
            },
        ],
        start: init_label,
        fin: block.fin,
        procs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{t_equal_check, TEqualConfig};
    use crate::text::parse_schema;

    #[test]
    fn straight_line_has_no_violations() {
        let s = parse_schema("final lf;\nl1: x = f(x) then l2;\nl2: y = g(x) then lf;\n").unwrap();
        assert!(check_l_schema(&s).is_empty());
    }

    #[test]
    fn backward_goto_is_an_order_violation() {
        let s = parse_schema("final lf;\nl1: x = f(x) then l2;\nl2: if p(x) then lf else l1;\n")
            .unwrap();
        let v = check_l_schema(&s);
        assert_eq!(v.order.len(), 1);
        assert_eq!(v.order[0].label, Label::new("l2"));
        assert_eq!(v.order[0].target, Label::new("l1"));
    }

    #[test]
    fn mutual_recursion_is_reported() {
        let text = "final lf;\nl1: do A then lf;\nproc A {\n  final af;\n  a1: do B then af;\n}\nproc B {\n  final bf;\n  b1: do A then bf;\n}\n";
        let s = parse_schema(text).unwrap();
        let v = check_l_schema(&s);
        assert_eq!(v.recursion, vec!["A".to_string(), "B".to_string()]);
        assert!(matches!(
            to_l_schema(&s),
            Err(NormalizeError::RecursionUnsupported(_))
        ));
    }

    #[test]
    fn already_structured_schema_is_a_fixed_point() {
        let text = "final lf;\nl1: do B while p(x) then lf;\nproc B {\n  final bf;\n  b1: x = f(x) then bf;\n}\n";
        let s = parse_schema(text).unwrap();
        let t = to_l_schema(&s).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn goto_elimination_preserves_behaviour() {
        let text = "final lf;\nl1: x = f(x) then l2;\nl2: if p(x) then lf else l1;\n";
        let s = parse_schema(text).unwrap();
        let t = to_l_schema(&s).unwrap();
        assert!(check_l_schema(&t).is_empty());
        // Idempotent once structured.
        assert_eq!(t, to_l_schema(&t).unwrap());
        let verdict = t_equal_check(&s, &t, TEqualConfig::default()).unwrap();
        assert!(!verdict.is_counterexample(), "{verdict:?}");
    }
}
