//! Transformation passes over schemas.
//!
//! - [`check_l_schema`] / [`to_l_schema`]: detect label-order cycles and
//!   recursion; eliminate gotos by encapsulating a cyclic instruction graph
//!   in a single loop driven by an interpreted program-counter variable.
//! - [`check_forward`] / [`forward_orient`]: detect and repair instructions
//!   whose index variables are overwritten later on the same branch, by
//!   snapshotting the index into a fresh variable ahead of its use.
//! - [`separate_loop`]: split a loop body into a chain of index
//!   controllers plus a kernel, with interpreted label-token dispatch
//!   stitching the levels back together.
//! - [`verify_controller_count`]: execute the separated loop symbolically
//!   and compare the deepest cell nesting among kernel index positions
//!   against the controller count.

mod depth;
mod forward;
mod lschema;
mod separate;

pub use depth::{verify_controller_count, DepthError, DepthReport};
pub use forward::{check_forward, forward_orient, forward_violations, ForwardViolation};
pub use lschema::{check_l_schema, to_l_schema, LViolations, OrderViolation};
pub use separate::{apply_separation, separate_loop, LevelReport, SeparatedLoop, SeparationReport};

use std::collections::{BTreeMap, BTreeSet};

use crate::schema::{Label, Schema};

#[derive(Debug, Clone, thiserror::Error)]
pub enum NormalizeError {
    #[error("recursive procedures are not supported: {0}")]
    RecursionUnsupported(String),
    #[error("instruction {0} is not a loop")]
    NotALoop(Label),
    #[error("no instruction labelled {0}")]
    UnknownLabel(Label),
    #[error("loop body {0} is not declared")]
    BodyNotFound(String),
    #[error("loop body is not loop-structured: {0}")]
    NotLSchema(String),
    #[error("loop body is not forward oriented: {0}")]
    NotForwardOriented(String),
    #[error("separation requires the loop body to use at least one indexed variable")]
    EmptyIndexSet,
    #[error("separation failed: {0}")]
    SeparationFailed(String),
}

/// Deterministic fresh-name minting, seeded with every identifier already
/// in use.
pub(crate) struct NameAlloc {
    used: BTreeSet<String>,
    counters: BTreeMap<String, u32>,
}

impl NameAlloc {
    pub fn for_schema(root: &Schema) -> Self {
        NameAlloc {
            used: root.used_names(),
            counters: BTreeMap::new(),
        }
    }

    pub fn fresh(&mut self, prefix: &str) -> String {
        loop {
            let n = self.counters.entry(prefix.to_string()).or_insert(1);
            let candidate = format!("{prefix}{n}");
            *n += 1;
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

/// Successor labels of each instruction within one block (edges to the
/// final label excluded).
pub(crate) fn block_edges(s: &Schema) -> BTreeMap<Label, Vec<Label>> {
    let inputs: BTreeSet<&Label> = s.opers.iter().map(|i| &i.label).collect();
    s.opers
        .iter()
        .map(|i| {
            let outs = i
                .out_labels()
                .into_iter()
                .filter(|l| inputs.contains(l))
                .cloned()
                .collect();
            (i.label.clone(), outs)
        })
        .collect()
}

/// Labels reachable from `from` (inclusive) along block edges.
pub(crate) fn reachable_from(edges: &BTreeMap<Label, Vec<Label>>, from: &Label) -> BTreeSet<Label> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from.clone()];
    while let Some(l) = stack.pop() {
        if !seen.insert(l.clone()) {
            continue;
        }
        if let Some(next) = edges.get(&l) {
            stack.extend(next.iter().cloned());
        }
    }
    seen
}
