//! Execution-based dependence oracle.
//!
//! Runs the nest under an interpretation with every cell access logged,
//! then derives dependence edges from the per-cell access history: a flow
//! edge for every (write, later read) pair on the same cell and an output
//! edge for every (write, later write) pair, regardless of intervening
//! writes; that matches the raw solution set of the connection equation.
//! An edge is *immediate* when no other write to the cell lies between its
//! endpoints.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::interp::{run_traced, AccessKind, CellId, Interpretation, RunStatus, Trace, Value};
use crate::schema::{Label, Schema};

use super::{
    build_connection_equations, classify, infer_params, solve_linear_equation, Bounds,
    Classification, ConnectionEquation, DependenceError, EqKind, IterVec, Nest, SolutionSet,
};

/// An execution step: instruction label plus the iteration vector of the
/// enclosing counted loops.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct StepRef {
    pub label: Label,
    pub iter: IterVec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Flow,
    Output,
}

/// A producer/consumer link observed during execution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DependenceEdge {
    pub producer: StepRef,
    pub consumer: StepRef,
    pub cell: String,
    pub array: Option<String>,
    pub kind: EdgeKind,
    pub immediate: bool,
}

/// Execute the nest and log dependences. The interpretation needs enough
/// start data for the run to finish (hashed defaults work well).
pub fn brute_force_dependences(
    schema: &Schema,
    interp: &Interpretation,
    fuel: u64,
) -> Result<Vec<DependenceEdge>, DependenceError> {
    let mut trace = Trace::default();
    let outcome = run_traced(schema, interp, fuel, &mut trace);
    match outcome.status {
        RunStatus::Final => {}
        RunStatus::OutOfFuel => return Err(DependenceError::Oracle("out of fuel".to_string())),
        RunStatus::Undefined => {
            return Err(DependenceError::Oracle(outcome.reason.unwrap_or_default()))
        }
    }
    Ok(edges_from_trace(&trace))
}

pub(crate) fn edges_from_trace(trace: &Trace) -> Vec<DependenceEdge> {
    let mut history: BTreeMap<&CellId, Vec<(AccessKind, &Label, &IterVec)>> = BTreeMap::new();
    for e in &trace.events {
        history
            .entry(&e.cell)
            .or_default()
            .push((e.kind, &e.label, &e.iter));
    }

    let mut edges = Vec::new();
    for (cell, accesses) in history {
        let array = match cell {
            CellId::Arr(name, _) => Some(name.clone()),
            CellId::Simple(_) => None,
        };
        let writes: Vec<usize> = accesses
            .iter()
            .enumerate()
            .filter(|(_, (k, _, _))| *k == AccessKind::Write)
            .map(|(i, _)| i)
            .collect();
        for (wpos, &w) in writes.iter().enumerate() {
            let (_, wlabel, witer) = accesses[w];
            let next_write = writes.get(wpos + 1).copied();
            for (i, (kind, label, iter)) in accesses.iter().enumerate().skip(w + 1) {
                match kind {
                    AccessKind::Read => {
                        let immediate = next_write.map(|nw| i < nw).unwrap_or(true);
                        edges.push(DependenceEdge {
                            producer: StepRef {
                                label: wlabel.clone(),
                                iter: witer.clone(),
                            },
                            consumer: StepRef {
                                label: (*label).clone(),
                                iter: (*iter).clone(),
                            },
                            cell: cell.to_string(),
                            array: array.clone(),
                            kind: EdgeKind::Flow,
                            immediate,
                        });
                    }
                    AccessKind::Write => {
                        edges.push(DependenceEdge {
                            producer: StepRef {
                                label: wlabel.clone(),
                                iter: witer.clone(),
                            },
                            consumer: StepRef {
                                label: (*label).clone(),
                                iter: (*iter).clone(),
                            },
                            cell: cell.to_string(),
                            array: array.clone(),
                            kind: EdgeKind::Output,
                            immediate: next_write == Some(i),
                        });
                    }
                }
            }
        }
    }
    edges.sort();
    edges
}

/// Dependence edges as sorted JSON lines.
pub fn edges_to_jsonl(edges: &[DependenceEdge]) -> String {
    let mut out = String::new();
    for e in edges {
        let value = serde_json::to_value(e).expect("serializable");
        out.push_str(&serde_json::to_string(&value).expect("serializable"));
        out.push('\n');
    }
    out
}

/// DOT rendering of the dependence graph; flow edges solid, output edges
/// dashed.
pub fn dot_graph(edges: &[DependenceEdge]) -> String {
    let mut out = String::from("digraph dependences {\n  rankdir=LR;\n");
    let mut nodes: Vec<String> = Vec::new();
    let node_of = |s: &StepRef| {
        let iter: Vec<String> = s.iter.iter().map(|v| v.to_string()).collect();
        format!("{}@({})", s.label, iter.join(","))
    };
    for e in edges {
        for n in [node_of(&e.producer), node_of(&e.consumer)] {
            if !nodes.contains(&n) {
                nodes.push(n);
            }
        }
    }
    for n in &nodes {
        out.push_str(&format!("  \"{n}\";\n"));
    }
    for e in edges {
        let style = match e.kind {
            EdgeKind::Flow => "solid",
            EdgeKind::Output => "dashed",
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [style={style}, label=\"{}\"];\n",
            node_of(&e.producer),
            node_of(&e.consumer),
            e.cell
        ));
    }
    out.push_str("}\n");
    out
}

/// Result of comparing the exact solver against the execution oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonReport {
    pub matched: bool,
    pub flow_pair_count: usize,
    pub output_pair_count: usize,
    pub solver_only: Vec<(String, IterVec, IterVec)>,
    pub oracle_only: Vec<(String, IterVec, IterVec)>,
}

/// Compare the enumerated solutions of every connection equation against
/// the observed edges, as (array, producer iteration, consumer iteration)
/// sets with the producer strictly earlier. Requires every equation to be
/// linear over the counters.
pub fn solver_vs_oracle(
    schema: &Schema,
    nest: &Nest,
    bounds: &Bounds,
    seed: u64,
    fuel: u64,
    cap: usize,
) -> Result<ComparisonReport, DependenceError> {
    let equations = build_connection_equations(nest, bounds);
    let counters = nest.counter_names();
    for eq in &equations {
        let class = classify(eq, &counters);
        if class != Classification::Linear {
            return Err(DependenceError::NotComparable(format!(
                "equation on {} is {class}",
                eq.array
            )));
        }
    }

    let mut solver_flow: Vec<(String, IterVec, IterVec)> = Vec::new();
    let mut solver_output: Vec<(String, IterVec, IterVec)> = Vec::new();
    for eq in &equations {
        let pairs = match solve_linear_equation(eq, &counters, cap) {
            SolutionSet::Enumerated { pairs } => pairs,
            SolutionSet::Empty => Vec::new(),
            SolutionSet::Parametric { .. } => {
                return Err(DependenceError::CapExceeded(eq.array.clone()))
            }
            SolutionSet::Unknown { reason } => return Err(DependenceError::NotComparable(reason)),
        };
        let bucket = match eq.kind {
            EqKind::Flow => &mut solver_flow,
            EqKind::Output => &mut solver_output,
        };
        for (m1, m2) in pairs {
            if m1 < m2 {
                bucket.push((eq.array.clone(), m1, m2));
            }
        }
        if eq.kind == EqKind::Output && eq.writer.label != eq.reader.label {
            // Write/write pairs of two distinct statements can land either
            // way around in execution order; solve the swapped roles too.
            let swapped = ConnectionEquation {
                writer: eq.reader.clone(),
                reader: eq.writer.clone(),
                ..eq.clone()
            };
            if let SolutionSet::Enumerated { pairs } =
                solve_linear_equation(&swapped, &counters, cap)
            {
                for (m1, m2) in pairs {
                    if m1 < m2 {
                        solver_output.push((eq.array.clone(), m1, m2));
                    }
                }
            }
        }
    }
    solver_flow.sort();
    solver_flow.dedup();
    solver_output.sort();
    solver_output.dedup();

    let params = infer_params(nest, bounds)?;
    let mut interp = Interpretation::seeded(seed, 257);
    for (name, value) in params {
        interp = interp.with_start(&name, Value::Int(value));
    }
    let edges = brute_force_dependences(schema, &interp, fuel)?;
    let mut oracle_flow: Vec<(String, IterVec, IterVec)> = Vec::new();
    let mut oracle_output: Vec<(String, IterVec, IterVec)> = Vec::new();
    for e in &edges {
        let Some(array) = &e.array else { continue };
        if e.producer.iter >= e.consumer.iter {
            continue;
        }
        let entry = (
            array.clone(),
            e.producer.iter.clone(),
            e.consumer.iter.clone(),
        );
        match e.kind {
            EdgeKind::Flow => oracle_flow.push(entry),
            EdgeKind::Output => oracle_output.push(entry),
        }
    }
    oracle_flow.sort();
    oracle_flow.dedup();
    oracle_output.sort();
    oracle_output.dedup();

    let diff = |a: &[(String, IterVec, IterVec)], b: &[(String, IterVec, IterVec)]| {
        a.iter()
            .filter(|x| !b.contains(x))
            .cloned()
            .collect::<Vec<_>>()
    };
    let mut solver_only = diff(&solver_flow, &oracle_flow);
    solver_only.extend(diff(&solver_output, &oracle_output));
    let mut oracle_only = diff(&oracle_flow, &solver_flow);
    oracle_only.extend(diff(&oracle_output, &solver_output));

    Ok(ComparisonReport {
        matched: solver_only.is_empty() && oracle_only.is_empty(),
        flow_pair_count: solver_flow.len(),
        output_pair_count: solver_output.len(),
        solver_only,
        oracle_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::{extract_nest, resolve_bounds};
    use crate::text::parse_schema;
    use std::collections::BTreeMap;

    fn bounds_n(names: &[&str], n: i64) -> BTreeMap<String, (i64, i64)> {
        names.iter().map(|c| (c.to_string(), (1, n))).collect()
    }

    #[test]
    fn scalar_loop_chains_iterations() {
        let s = parse_schema(
            "li: for (i = 0; i < 4; i++) {\n  l1: x = f(x) then le;\n  final le;\n}\n",
        )
        .unwrap();
        let interp = Interpretation::seeded(1, 7);
        let edges = brute_force_dependences(&s, &interp, 10_000).unwrap();
        let flows: Vec<&DependenceEdge> =
            edges.iter().filter(|e| e.kind == EdgeKind::Flow).collect();
        // x@0 -> x@1..3 reads plus chained pairs; immediate ones step by 1.
        let immediate: Vec<_> = flows.iter().filter(|e| e.immediate).collect();
        assert_eq!(immediate.len(), 3);
        for e in &immediate {
            assert_eq!(e.consumer.iter[0], e.producer.iter[0] + 1);
        }
        assert!(flows
            .iter()
            .any(|e| e.producer.iter == vec![0] && e.consumer.iter == vec![2] && !e.immediate));
    }

    #[test]
    fn write_only_loop_has_no_flow_edges() {
        let s = parse_schema(
            "li: for (i = 0; i < 5; i++) {\n  l1: a[i] = f(i) then le;\n  final le;\n}\n",
        )
        .unwrap();
        let interp = Interpretation::seeded(1, 7);
        let edges = brute_force_dependences(&s, &interp, 10_000).unwrap();
        assert!(edges.iter().all(|e| e.kind != EdgeKind::Flow));
        assert!(edges.iter().all(|e| e.kind != EdgeKind::Output));
    }

    #[test]
    fn stencil_matches_its_offsets() {
        let text = "lk: for (k = 1; k < N + 1; k++) {\n  li: for (i = 1; i < N + 1; i++) {\n    lj: for (j = 1; j < N + 1; j++) {\n      ls: f[k, i, j] = avg4(f[k, i - 1, j], f[k, i, j - 1], f[k - 1, i + 1, j], f[k - 1, i, j + 1]) then le;\n      final le;\n    }\n  }\n}\n";
        let s = parse_schema(text).unwrap();
        let n = 2i64;
        let interp = Interpretation::seeded(0, 257).with_start("N", Value::Int(n));
        let edges = brute_force_dependences(&s, &interp, 100_000).unwrap();
        let flow: Vec<&DependenceEdge> = edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Flow && e.array.is_some())
            .collect();
        let offsets: [[i64; 3]; 4] = [[0, 1, 0], [0, 0, 1], [1, -1, 0], [1, 0, -1]];
        for e in &flow {
            let d: Vec<i64> = e
                .consumer
                .iter
                .iter()
                .zip(&e.producer.iter)
                .map(|(c, p)| c - p)
                .collect();
            assert!(
                offsets.iter().any(|o| o.as_slice() == d.as_slice()),
                "{d:?}"
            );
        }
        // Every in-range offset pair is present.
        let in_box = |p: &[i64]| p.iter().all(|&v| v >= 1 && v <= n);
        let mut expected = 0;
        for k in 1..=n {
            for i in 1..=n {
                for j in 1..=n {
                    for o in &offsets {
                        let src = [k - o[0], i - o[1], j - o[2]];
                        if in_box(&src) {
                            expected += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(flow.len(), expected);
    }

    #[test]
    fn solver_agrees_with_oracle_on_the_stencil() {
        let text = "lk: for (k = 1; k < N + 1; k++) {\n  li: for (i = 1; i < N + 1; i++) {\n    lj: for (j = 1; j < N + 1; j++) {\n      ls: f[k, i, j] = avg4(f[k, i - 1, j], f[k, i, j - 1], f[k - 1, i + 1, j], f[k - 1, i, j + 1]) then le;\n      final le;\n    }\n  }\n}\n";
        let s = parse_schema(text).unwrap();
        let nest = extract_nest(&s).unwrap();
        let bounds = resolve_bounds(&nest, &bounds_n(&["k", "i", "j"], 3)).unwrap();
        let report = solver_vs_oracle(&s, &nest, &bounds, 0, 1_000_000, 1_000_000).unwrap();
        assert!(report.matched, "{report:?}");
        assert!(report.flow_pair_count > 0);
    }

    #[test]
    fn uninterpreted_index_is_not_comparable() {
        let text =
            "li: for (i = 0; i < 4; i++) {\n  l1: a[g(i)] = f(a[i]) then le;\n  final le;\n}\n";
        let s = parse_schema(text).unwrap();
        let nest = extract_nest(&s).unwrap();
        let bounds = resolve_bounds(&nest, &BTreeMap::new()).unwrap();
        assert!(matches!(
            solver_vs_oracle(&s, &nest, &bounds, 0, 10_000, 1_000),
            Err(DependenceError::NotComparable(_))
        ));
    }

    #[test]
    fn edges_serialize_to_sorted_json_lines() {
        let s = parse_schema(
            "li: for (i = 0; i < 3; i++) {\n  l1: a[i + 1] = f(a[i]) then le;\n  final le;\n}\n",
        )
        .unwrap();
        let interp = Interpretation::seeded(1, 7);
        let edges = brute_force_dependences(&s, &interp, 10_000).unwrap();
        let jsonl = edges_to_jsonl(&edges);
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), edges.len());
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted, "lines come out sorted");
        for line in lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["producer", "consumer", "cell", "kind", "immediate"] {
                assert!(v.get(key).is_some(), "missing {key} in {line}");
            }
        }
        let dot = dot_graph(&edges);
        assert!(dot.starts_with("digraph"));
    }

    #[test]
    fn multi_writer_cell_gets_all_pairs_and_immediacy() {
        // Two writes per iteration to the same cell a[0].
        let s = parse_schema(
            "li: for (i = 0; i < 2; i++) {\n  l1: a[0] = f(i) then l2;\n  l2: a[0] = g(a[0]) then le;\n  final le;\n}\n",
        )
        .unwrap();
        let interp = Interpretation::seeded(3, 7);
        let edges = brute_force_dependences(&s, &interp, 10_000).unwrap();
        let outputs: Vec<&DependenceEdge> = edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Output)
            .collect();
        // 4 writes total: 3+2+1 ordered pairs.
        assert_eq!(outputs.len(), 6);
        assert_eq!(outputs.iter().filter(|e| e.immediate).count(), 3);
        let flows: Vec<&DependenceEdge> =
            edges.iter().filter(|e| e.kind == EdgeKind::Flow).collect();
        // Each l2 read sees pairs with every earlier write.
        assert_eq!(flows.len(), 1 + 3);
    }
}
