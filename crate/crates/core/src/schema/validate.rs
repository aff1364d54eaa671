//! Structural validation of schemas.
//!
//! Violations are data, not failures: the report lists every broken
//! invariant with the offending label. An empty report means the schema is
//! well-formed and determined.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{Label, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Label of the offending instruction, when there is one.
    pub label: Option<Label>,
    /// Procedure the violation was found in; empty for the top level.
    pub scope: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, scope: &str, label: Option<&Label>, message: String) {
        self.violations.push(Violation {
            label: label.cloned(),
            scope: scope.to_string(),
            message,
        });
    }
}

/// Check determinedness, label wiring, symbol-arity and array-dimension
/// consistency, index-expression shape, and label disjointness between
/// procedure scopes.
pub fn validate(schema: &Schema) -> ValidationReport {
    let mut report = ValidationReport::default();

    let table = schema.symbols();
    for (sym, seen, expected) in &table.arity_conflicts {
        report.push(
            "",
            None,
            format!("symbol {sym} used with arity {seen} but previously with arity {expected}"),
        );
    }
    for (arr, seen, expected) in &table.dim_conflicts {
        report.push(
            "",
            None,
            format!("inconsistent dimensionality for {arr}: {seen} after {expected}"),
        );
    }

    // A simple name must not double as an array name.
    for name in &table.simple_vars {
        if table.arrays.contains_key(name) {
            report.push(
                "",
                None,
                format!("name {name} used both as a simple variable and as an array"),
            );
        }
    }

    let mut seen_label_sets: Vec<(String, BTreeSet<Label>)> = Vec::new();
    let mut chain: Vec<&Schema> = Vec::new();
    validate_tree("", schema, &mut chain, &mut seen_label_sets, &mut report);

    report
}

fn validate_tree<'a>(
    scope: &str,
    s: &'a Schema,
    chain: &mut Vec<&'a Schema>,
    seen_label_sets: &mut Vec<(String, BTreeSet<Label>)>,
    report: &mut ValidationReport,
) {
    chain.push(s);
    validate_block(scope, s, chain, report);
    let labels: BTreeSet<Label> = s.opers.iter().map(|i| i.label.clone()).collect();
    for (other_scope, other) in seen_label_sets.iter() {
        if let Some(shared) = labels.intersection(other).next() {
            report.push(
                scope,
                Some(shared),
                format!("label {shared} is shared with scope '{other_scope}'"),
            );
        }
    }
    seen_label_sets.push((scope.to_string(), labels));
    for (name, p) in &s.procs {
        validate_tree(name, p, chain, seen_label_sets, report);
    }
    chain.pop();
}

fn validate_block(scope: &str, s: &Schema, chain: &[&Schema], report: &mut ValidationReport) {
    let mut inputs: BTreeSet<&Label> = BTreeSet::new();
    for instr in &s.opers {
        if !inputs.insert(&instr.label) {
            report.push(
                scope,
                Some(&instr.label),
                format!("duplicate input label {}", instr.label),
            );
        }
    }

    // Every output label must be an input label or the block's final label.
    for instr in &s.opers {
        for out in instr.out_labels() {
            if out != &s.fin && !inputs.contains(out) {
                report.push(
                    scope,
                    Some(&instr.label),
                    format!("output label {out} is neither an instruction nor the final label"),
                );
            }
        }
        if instr.label == s.fin {
            report.push(
                scope,
                Some(&instr.label),
                format!("final label {} is also an input label", s.fin),
            );
        }
        if let Some(body) = instr.body_proc() {
            let resolvable = chain
                .iter()
                .any(|ancestor| ancestor.procs.contains_key(body));
            if !resolvable {
                report.push(
                    scope,
                    Some(&instr.label),
                    format!("body procedure {body} is not declared in an enclosing scope"),
                );
            }
        }
    }

    if !s.opers.is_empty() && s.instr(&s.start).is_none() {
        report.push(
            scope,
            None,
            format!("start label {} has no instruction", s.start),
        );
    }
}
