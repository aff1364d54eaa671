//! Controller-count verification through symbolic execution.
//!
//! Running a separated loop under the Herbrand interpretation makes index
//! values record where they came from: each controller level that feeds an
//! index through an array read wraps the value in one more cell layer. The
//! deepest cell nesting among the index positions of kernel-accessed cells
//! must therefore be the controller count minus one.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::interp::{herbrand_run_with, CellId, Diagram, Memory, RunStatus, Trace, Value};
use crate::schema::Label;

use super::SeparatedLoop;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepthReport {
    pub controller_count: usize,
    /// Deepest cell nesting among index components of cells the kernel
    /// touched.
    pub max_depth: usize,
    pub consistent: bool,
    pub kernel_cell_accesses: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum DepthError {
    #[error("symbolic run ended without result: {0}")]
    Undefined(String),
    #[error("symbolic run exhausted its fuel")]
    OutOfFuel,
}

/// Execute the separated loop symbolically under `diagram` and report the
/// kernel's index-nesting depth. `start` may preset loop-bound variables.
pub fn verify_controller_count(
    sep: &SeparatedLoop,
    diagram: &Diagram,
    start: Memory,
    fuel: u64,
) -> Result<DepthReport, DepthError> {
    let driver = sep.driver();
    let mut trace = Trace::default();
    let outcome = herbrand_run_with(&driver, diagram, start, fuel, Some(&mut trace));
    match outcome.status {
        RunStatus::Final => {}
        RunStatus::OutOfFuel => return Err(DepthError::OutOfFuel),
        RunStatus::Undefined => {
            return Err(DepthError::Undefined(outcome.reason.unwrap_or_default()))
        }
    }

    let kernel_labels: BTreeSet<&Label> = sep.kernel.opers.iter().map(|i| &i.label).collect();
    let mut max_depth = 0usize;
    let mut accesses = 0usize;
    for event in &trace.events {
        if !kernel_labels.contains(&event.label) {
            continue;
        }
        if let CellId::Arr(_, indexes) = &event.cell {
            accesses += 1;
            for v in indexes {
                let depth = match v {
                    Value::Term(t) => t.bracket_depth(),
                    _ => 0,
                };
                max_depth = max_depth.max(depth);
            }
        }
    }

    let controller_count = sep.controllers.len();
    Ok(DepthReport {
        controller_count,
        max_depth,
        consistent: max_depth == controller_count.saturating_sub(1),
        kernel_cell_accesses: accesses,
        steps: outcome.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::Term;
    use crate::normalize::separate_loop;
    use crate::text::parse_schema;

    fn verify(text: &str, diagram: Diagram) -> DepthReport {
        let s = parse_schema(text).unwrap();
        let (sep, _) = separate_loop(&s, &Label::new("l0")).unwrap();
        verify_controller_count(&sep, &diagram, Memory::herbrand(), 10_000).unwrap()
    }

    #[test]
    fn one_controller_means_depth_zero() {
        let text = "final lf;\nl0: do B while p(i) then lf;\nproc B {\n  final bf;\n  b1: i = h(i) then b2;\n  b2: x = g(a[i], x) then bf;\n}\n";
        let report = verify(text, Diagram::with_default(false));
        assert_eq!(report.controller_count, 1);
        assert_eq!(report.max_depth, 0);
        assert!(report.consistent);
        assert!(report.kernel_cell_accesses > 0);
    }

    #[test]
    fn list_traversal_means_depth_one() {
        let text = "final lf;\nl0: do B while p(node) then lf;\nproc B {\n  final bf;\n  b1: node = succ(node) then b2;\n  b2: addr = deref(ptr[node]) then b3;\n  b3: sum = f(data[addr], sum) then bf;\n}\n";
        let report = verify(text, Diagram::with_default(false));
        assert_eq!(report.controller_count, 2);
        assert_eq!(report.max_depth, 1);
        assert!(report.consistent);
    }

    #[test]
    fn three_controllers_mean_depth_two() {
        let text = "final lf;\nl0: do B while p(i) then lf;\nproc B {\n  final bf;\n  b1: i = step(i) then b2;\n  b2: j = deref(b[i]) then b3;\n  b3: k2 = deref(c[j]) then b4;\n  b4: acc = f(d[k2], acc) then bf;\n}\n";
        let report = verify(text, Diagram::with_default(false));
        assert_eq!(report.controller_count, 3);
        assert_eq!(report.max_depth, 2);
        assert!(report.consistent);
    }

    #[test]
    fn explicit_diagram_drives_one_pass() {
        let text = "final lf;\nl0: do B while p(node) then lf;\nproc B {\n  final bf;\n  b1: node = succ(node) then b2;\n  b2: addr = deref(ptr[node]) then b3;\n  b3: sum = f(data[addr], sum) then bf;\n}\n";
        let mut d = Diagram::new();
        d.insert(
            "p",
            vec![Term::App("succ".into(), vec![Term::Var("node".into())])],
            false,
        );
        let report = verify(text, d);
        assert!(report.consistent);
        // One pass reads data[...] once and writes sum (a simple cell).
        assert_eq!(report.kernel_cell_accesses, 1);
    }
}
