//! Separation of a loop body into index controllers and a kernel.
//!
//! Each extraction round walks the body graph accumulating the set of
//! written variables and stops a branch at the first instruction whose
//! index variables were written earlier on the walk (a *limited*
//! instruction) or at the body's final label. The visited region becomes
//! the next controller level. Interpreted bookkeeping stitches the levels:
//! a level records the label it stopped at in its `vLeb<k>` token variable,
//! and the following level opens with a dispatch chain that resumes there.
//! Rounds repeat while the remainder still contains an instruction that
//! writes an index of the remainder; what is left is the kernel.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::schema::{
    var_sets, AffineExpr, Arg, AssignRhs, InstrKind, Instruction, Label, Schema, VarSets, Variable,
};

use super::{check_l_schema, forward_violations, NameAlloc, NormalizeError};

/// One controller level of the report: the original instructions that make
/// it up and the labels it recorded as resume points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelReport {
    pub labels: Vec<Label>,
    pub limited: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeparationReport {
    pub controller_count: usize,
    pub strictly_separated: bool,
    pub levels: Vec<LevelReport>,
    pub kernel: Vec<Label>,
    /// Violations of the controller/kernel variable-set conditions; empty
    /// when the construction worked as intended.
    pub set_condition_violations: Vec<String>,
}

/// A separated loop: ordered controller procedures, the kernel procedure,
/// and the assembled chain body that replaces the original loop body.
#[derive(Debug, Clone)]
pub struct SeparatedLoop {
    pub controllers: Vec<Schema>,
    pub kernel: Schema,
    pub dispatch_vars: Vec<String>,
    pub origin: Instruction,
    pub controller_names: Vec<String>,
    pub kernel_name: String,
    pub chain_name: String,
    /// The chain procedure: `do Lev1; do Lev2; …; do Ker`, carrying the
    /// levels, the kernel, and the original body's sub-procedures.
    pub chain: Schema,
}

impl SeparatedLoop {
    /// The loop instruction running the separated body, plus the procedure
    /// to declare next to it.
    pub fn reassemble(&self) -> (Instruction, BTreeMap<String, Schema>) {
        let kind = match &self.origin.kind {
            InstrKind::Loop { cond, next, .. } => InstrKind::Loop {
                body: self.chain_name.clone(),
                cond: cond.clone(),
                next: next.clone(),
            },
            other => other.clone(),
        };
        let instr = Instruction {
            label: self.origin.label.clone(),
            kind,
        };
        let mut procs = BTreeMap::new();
        procs.insert(self.chain_name.clone(), self.chain.clone());
        (instr, procs)
    }

    /// A minimal runnable schema: the separated loop as the only
    /// instruction.
    pub fn driver(&self) -> Schema {
        let (instr, procs) = self.reassemble();
        let fin = instr.out_labels()[0].clone();
        Schema {
            start: instr.label.clone(),
            fin,
            opers: vec![instr],
            procs,
        }
    }
}

struct Rem {
    nodes: BTreeMap<Label, Instruction>,
    order: Vec<Label>,
}

impl Rem {
    fn edges_of(&self, label: &Label) -> Vec<Label> {
        self.nodes[label]
            .out_labels()
            .into_iter()
            .filter(|l| self.nodes.contains_key(l))
            .cloned()
            .collect()
    }
}

struct LevelOut {
    proc_schema: Schema,
    region: Vec<Label>,
    recorded: Vec<Label>,
    token: String,
}

/// Separate the loop labelled `loop_label` (found anywhere in the schema).
/// The body must be a forward-oriented loop-structured schema using at
/// least one indexed variable.
pub fn separate_loop(
    root: &Schema,
    loop_label: &Label,
) -> Result<(SeparatedLoop, SeparationReport), NormalizeError> {
    let (origin, body) = find_loop(root, loop_label)?;

    let l_violations = check_l_schema(&body_scope(root, body));
    if !l_violations.is_empty() {
        return Err(NormalizeError::NotLSchema(format!(
            "{} order violations, {} recursive procedures",
            l_violations.order.len(),
            l_violations.recursion.len()
        )));
    }
    let fwd = forward_violations(&body_scope(root, body));
    if !fwd.is_empty() {
        let v = &fwd[0];
        return Err(NormalizeError::NotForwardOriented(format!(
            "{} writes index variable {} used by {}",
            v.writer, v.var, v.user
        )));
    }
    let body_sets = sets_of_block(root, body);
    if body_sets.ind.is_empty() {
        return Err(NormalizeError::EmptyIndexSet);
    }

    let mut alloc = NameAlloc::for_schema(root);
    let mut rem = Rem {
        nodes: body
            .opers
            .iter()
            .map(|i| (i.label.clone(), i.clone()))
            .collect(),
        order: body.opers.iter().map(|i| i.label.clone()).collect(),
    };

    let mut levels: Vec<LevelOut> = Vec::new();
    let mut pending: Vec<Label> = Vec::new();
    let mut prev_token: Option<String> = None;

    loop {
        let entries: Vec<Label> = if levels.is_empty() {
            vec![body.start.clone()]
        } else {
            pending
                .iter()
                .filter(|l| rem.nodes.contains_key(l))
                .cloned()
                .collect()
        };
        let out = extract_level(root, &rem, &entries, prev_token.as_deref(), &mut alloc)?;

        for l in &out.region {
            rem.nodes.remove(l);
        }
        rem.order.retain(|l| rem.nodes.contains_key(l));
        pending.retain(|l| rem.nodes.contains_key(l));
        for l in &out.recorded {
            if rem.nodes.contains_key(l) && !pending.contains(l) {
                pending.push(l.clone());
            }
        }
        prev_token = Some(out.token.clone());
        levels.push(out);

        if rem.nodes.is_empty() || !has_index_writer(root, &rem) {
            break;
        }
    }

    let kernel_entries: Vec<Label> = pending
        .iter()
        .filter(|l| rem.nodes.contains_key(l))
        .cloned()
        .collect();
    let kernel = build_kernel(
        &rem,
        &kernel_entries,
        prev_token.as_deref().expect("at least one level"),
        &mut alloc,
    );
    let kernel_labels: Vec<Label> = rem.order.clone();

    // Assemble the chain: controllers in order, then the kernel.
    let controller_names: Vec<String> = levels.iter().map(|_| alloc.fresh("Lev")).collect();
    let kernel_name = alloc.fresh("Ker");
    let chain_fin = Label::new(alloc.fresh("m_lev"));
    let chain_labels: Vec<Label> = (0..levels.len() + 1)
        .map(|_| Label::new(alloc.fresh("m_lev")))
        .collect();
    let mut chain_opers = Vec::new();
    for (i, name) in controller_names.iter().enumerate() {
        chain_opers.push(Instruction {
            label: chain_labels[i].clone(),
            kind: InstrKind::Call {
                body: name.clone(),
                next: chain_labels
                    .get(i + 1)
                    .cloned()
                    .unwrap_or_else(|| chain_fin.clone()),
            },
        });
    }
    chain_opers.push(Instruction {
        label: chain_labels[levels.len()].clone(),
        kind: InstrKind::Call {
            body: kernel_name.clone(),
            next: chain_fin.clone(),
        },
    });
    let mut chain_procs: BTreeMap<String, Schema> = body.procs.clone();
    for (name, lvl) in controller_names.iter().zip(&levels) {
        chain_procs.insert(name.clone(), lvl.proc_schema.clone());
    }
    chain_procs.insert(kernel_name.clone(), kernel.clone());
    let chain = Schema {
        start: chain_labels[0].clone(),
        fin: chain_fin,
        opers: chain_opers,
        procs: chain_procs,
    };
    let chain_name = alloc.fresh("SepBody");

    let sep = SeparatedLoop {
        controllers: levels.iter().map(|l| l.proc_schema.clone()).collect(),
        kernel,
        dispatch_vars: levels.iter().map(|l| l.token.clone()).collect(),
        origin: origin.clone(),
        controller_names,
        kernel_name,
        chain_name,
        chain,
    };

    let (set_condition_violations, strictly_separated) = check_set_conditions(&sep);
    let report = SeparationReport {
        controller_count: levels.len(),
        strictly_separated,
        levels: levels
            .iter()
            .map(|l| LevelReport {
                labels: l.region.clone(),
                limited: l.recorded.clone(),
            })
            .collect(),
        kernel: kernel_labels,
        set_condition_violations,
    };
    Ok((sep, report))
}

/// Replace the loop's body with the separated chain in a copy of the
/// schema. The chain takes over the original body's procedure name, so
/// counted loops keep printing as `for` blocks that reparse to the same
/// schema.
pub fn apply_separation(
    root: &Schema,
    loop_label: &Label,
) -> Result<(Schema, SeparatedLoop, SeparationReport), NormalizeError> {
    let (sep, report) = separate_loop(root, loop_label)?;
    let (mut instr, mut procs) = sep.reassemble();
    let old_body = sep
        .origin
        .body_proc()
        .expect("origin is a loop")
        .to_string();
    let chain = procs
        .remove(&sep.chain_name)
        .expect("reassemble declares the chain");
    procs.insert(old_body.clone(), chain);
    if let InstrKind::Loop { body, .. } = &mut instr.kind {
        *body = old_body.clone();
    }
    let mut out = root.clone();
    if !replace_in(&mut out, loop_label, &instr, &procs, &old_body) {
        return Err(NormalizeError::UnknownLabel(loop_label.clone()));
    }
    Ok((out, sep, report))
}

fn replace_in(
    block: &mut Schema,
    loop_label: &Label,
    instr: &Instruction,
    procs: &BTreeMap<String, Schema>,
    old_body: &str,
) -> bool {
    let mut here = false;
    for op in &mut block.opers {
        if &op.label == loop_label {
            *op = instr.clone();
            here = true;
        }
    }
    if here {
        block.procs.remove(old_body);
        for (name, p) in procs {
            block.procs.insert(name.clone(), p.clone());
        }
        return true;
    }
    for p in block.procs.values_mut() {
        if replace_in(p, loop_label, instr, procs, old_body) {
            return true;
        }
    }
    false
}

fn find_loop<'a>(
    root: &'a Schema,
    loop_label: &Label,
) -> Result<(&'a Instruction, &'a Schema), NormalizeError> {
    for (_, block) in root.all_schemas() {
        if let Some(instr) = block.instr(loop_label) {
            return match &instr.kind {
                InstrKind::Loop { body, .. } => {
                    let body_schema = block
                        .procs
                        .get(body)
                        .or_else(|| root.find_proc(body))
                        .ok_or_else(|| NormalizeError::BodyNotFound(body.clone()))?;
                    Ok((instr, body_schema))
                }
                _ => Err(NormalizeError::NotALoop(loop_label.clone())),
            };
        }
    }
    Err(NormalizeError::UnknownLabel(loop_label.clone()))
}

/// A standalone scope for analysing the body: its instructions with the
/// root's procedures visible for resolution.
fn body_scope(root: &Schema, body: &Schema) -> Schema {
    let mut procs = body.procs.clone();
    for (name, p) in &root.procs {
        procs.entry(name.clone()).or_insert_with(|| p.clone());
    }
    Schema {
        opers: body.opers.clone(),
        start: body.start.clone(),
        fin: body.fin.clone(),
        procs,
    }
}

fn sets_of_block(root: &Schema, block: &Schema) -> VarSets {
    let mut sets = VarSets::default();
    for instr in &block.opers {
        sets.union_with(&var_sets(root, instr));
    }
    sets
}

fn has_index_writer(root: &Schema, rem: &Rem) -> bool {
    let mut ind_names: BTreeSet<String> = BTreeSet::new();
    let mut val_names: Vec<(Label, BTreeSet<String>)> = Vec::new();
    for label in &rem.order {
        let sets = var_sets(root, &rem.nodes[label]);
        ind_names.extend(sets.ind_names());
        val_names.push((label.clone(), sets.val_simple_names()));
    }
    val_names
        .iter()
        .any(|(_, vals)| vals.intersection(&ind_names).next().is_some())
}

fn extract_level(
    root: &Schema,
    rem: &Rem,
    entries: &[Label],
    prev_token: Option<&str>,
    alloc: &mut NameAlloc,
) -> Result<LevelOut, NormalizeError> {
    let mut excluded: BTreeSet<Label> = BTreeSet::new();

    let region = loop {
        let live: Vec<&Label> = entries.iter().filter(|e| !excluded.contains(e)).collect();
        let mut region: BTreeSet<Label> = BTreeSet::new();
        let mut stack: Vec<Label> = live.iter().map(|l| (*l).clone()).collect();
        while let Some(l) = stack.pop() {
            if excluded.contains(&l) || !region.insert(l.clone()) {
                continue;
            }
            stack.extend(rem.edges_of(&l));
        }

        // Accumulated written-variable sets along every path into each
        // region node (union over joins, the conservative reading).
        let order: Vec<Label> = rem
            .order
            .iter()
            .filter(|l| region.contains(l))
            .cloned()
            .collect();
        let mut preds: BTreeMap<Label, Vec<Label>> = BTreeMap::new();
        for l in &order {
            for succ in rem.edges_of(l) {
                if region.contains(&succ) {
                    preds.entry(succ).or_default().push(l.clone());
                }
            }
        }
        let topo = topo_order(&order, &preds, rem)?;
        let mut vs_in: BTreeMap<Label, BTreeSet<String>> = BTreeMap::new();
        let mut newly_limited = Vec::new();
        for label in &topo {
            let mut vs = BTreeSet::new();
            for p in preds.get(label).into_iter().flatten() {
                vs.extend(vs_in[p].iter().cloned());
                vs.extend(var_sets(root, &rem.nodes[p]).val_simple_names());
            }
            let ind = var_sets(root, &rem.nodes[label]).ind_names();
            if ind.intersection(&vs).next().is_some() {
                newly_limited.push(label.clone());
            }
            vs_in.insert(label.clone(), vs);
        }
        if !newly_limited.is_empty() {
            excluded.extend(newly_limited);
            continue;
        }

        // A region node with an in-edge from outside the region may still
        // have to run after this level stops; it must not be captured.
        let mut demoted = Vec::new();
        for label in rem.order.iter().filter(|l| !region.contains(l)) {
            for succ in rem.edges_of(label) {
                if region.contains(&succ) {
                    demoted.push(succ);
                }
            }
        }
        if demoted.is_empty() {
            break region;
        }
        excluded.extend(demoted);
    };

    if region.is_empty() {
        return Err(NormalizeError::SeparationFailed(
            "extraction produced an empty controller level".to_string(),
        ));
    }

    let region_order: Vec<Label> = rem
        .order
        .iter()
        .filter(|l| region.contains(l))
        .cloned()
        .collect();

    // Exit targets in first-encounter order: limited instructions and the
    // body final label.
    let mut exit_targets: Vec<Label> = Vec::new();
    for label in &region_order {
        for out in rem.nodes[label].out_labels() {
            let leaves = !region.contains(out);
            if leaves && !exit_targets.contains(out) {
                exit_targets.push(out.clone());
            }
        }
    }

    let token = alloc.fresh("vLeb");
    let proc_fin = Label::new(alloc.fresh("m_aux"));
    let setters: BTreeMap<Label, Label> = exit_targets
        .iter()
        .map(|t| (t.clone(), Label::new(alloc.fresh("m_aux"))))
        .collect();

    let mut opers: Vec<Instruction> = Vec::new();
    let mut start = region_order.first().cloned().expect("region is non-empty");

    if let Some(prev) = prev_token {
        // Dispatch chain over the entries this level owns; anything else
        // forwards the token to the next level.
        let in_region: Vec<&Label> = entries.iter().filter(|e| region.contains(e)).collect();
        let fwd_label = Label::new(alloc.fresh("m_aux"));
        let mut dispatch_labels: Vec<Label> = Vec::new();
        for _ in &in_region {
            dispatch_labels.push(Label::new(alloc.fresh("m_aux")));
        }
        for (i, entry) in in_region.iter().enumerate() {
            let else_label = dispatch_labels
                .get(i + 1)
                .cloned()
                .unwrap_or_else(|| fwd_label.clone());
            opers.push(Instruction {
                label: dispatch_labels[i].clone(),
                kind: InstrKind::Cond {
                    psym: "$eq".to_string(),
                    args: vec![
                        Arg::Var(Variable::simple(prev.to_string())),
                        Arg::LabelLit((*entry).clone()),
                    ],
                    then_label: (*entry).clone(),
                    else_label,
                },
            });
        }
        opers.push(Instruction {
            label: fwd_label.clone(),
            kind: InstrKind::Assign {
                target: Variable::simple(token.clone()),
                rhs: AssignRhs::Affine(AffineExpr::var(prev.to_string())),
                next: proc_fin.clone(),
            },
        });
        start = dispatch_labels.first().cloned().unwrap_or(fwd_label);
    }

    for label in &region_order {
        let mut instr = rem.nodes[label].clone();
        instr.map_out_labels(|l| {
            if region.contains(l) {
                l.clone()
            } else {
                setters[l].clone()
            }
        });
        opers.push(instr);
    }
    for target in &exit_targets {
        opers.push(Instruction {
            label: setters[target].clone(),
            kind: InstrKind::Assign {
                target: Variable::simple(token.clone()),
                rhs: AssignRhs::LabelLit(target.clone()),
                next: proc_fin.clone(),
            },
        });
    }

    Ok(LevelOut {
        proc_schema: Schema {
            opers,
            start,
            fin: proc_fin,
            procs: BTreeMap::new(),
        },
        region: region_order,
        recorded: exit_targets,
        token,
    })
}

fn topo_order(
    order: &[Label],
    preds: &BTreeMap<Label, Vec<Label>>,
    _rem: &Rem,
) -> Result<Vec<Label>, NormalizeError> {
    let mut remaining: Vec<Label> = order.to_vec();
    let mut placed: BTreeSet<Label> = BTreeSet::new();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let before = out.len();
        remaining.retain(|l| {
            let ready = preds
                .get(l)
                .map(|ps| ps.iter().all(|p| placed.contains(p)))
                .unwrap_or(true);
            if ready {
                out.push(l.clone());
                placed.insert(l.clone());
                false
            } else {
                true
            }
        });
        if out.len() == before {
            return Err(NormalizeError::NotLSchema(
                "cycle inside the loop body".to_string(),
            ));
        }
    }
    Ok(out)
}

fn build_kernel(rem: &Rem, entries: &[Label], prev_token: &str, alloc: &mut NameAlloc) -> Schema {
    let kernel_fin = Label::new(alloc.fresh("m_aux"));
    if rem.nodes.is_empty() {
        return Schema::empty(kernel_fin);
    }
    let mut opers = Vec::new();
    let mut dispatch_labels: Vec<Label> = Vec::new();
    for _ in entries {
        dispatch_labels.push(Label::new(alloc.fresh("m_aux")));
    }
    for (i, entry) in entries.iter().enumerate() {
        let else_label = dispatch_labels
            .get(i + 1)
            .cloned()
            .unwrap_or_else(|| kernel_fin.clone());
        opers.push(Instruction {
            label: dispatch_labels[i].clone(),
            kind: InstrKind::Cond {
                psym: "$eq".to_string(),
                args: vec![
                    Arg::Var(Variable::simple(prev_token.to_string())),
                    Arg::LabelLit(entry.clone()),
                ],
                then_label: entry.clone(),
                else_label,
            },
        });
    }
    for label in &rem.order {
        let mut instr = rem.nodes[label].clone();
        instr.map_out_labels(|l| {
            if rem.nodes.contains_key(l) {
                l.clone()
            } else {
                kernel_fin.clone()
            }
        });
        opers.push(instr);
    }
    Schema {
        start: dispatch_labels
            .first()
            .cloned()
            .unwrap_or_else(|| kernel_fin.clone()),
        fin: kernel_fin,
        opers,
        procs: BTreeMap::new(),
    }
}

/// Variable-set conditions for a separated loop: no level's index
/// variables are written by a later level, every level past the first
/// takes an index from its predecessor, and (strict separation) the kernel
/// writes nothing any controller uses.
fn check_set_conditions(sep: &SeparatedLoop) -> (Vec<String>, bool) {
    let scope = &sep.chain;
    let mut blocks: Vec<(String, VarSets, bool)> = Vec::new();
    for (i, c) in sep.controllers.iter().enumerate() {
        blocks.push((
            format!("controller {}", i + 1),
            sets_of_block(scope, c),
            false,
        ));
    }
    blocks.push((
        "kernel".to_string(),
        sets_of_block(scope, &sep.kernel),
        true,
    ));

    let mut violations = Vec::new();
    for i in 0..blocks.len() {
        for j in i + 1..blocks.len() {
            let ind = blocks[i].1.ind_names();
            let val = blocks[j].1.val_simple_names();
            let mut shared: Vec<&String> = ind.intersection(&val).collect();
            shared.sort();
            if let Some(v) = shared.first() {
                violations.push(format!(
                    "{} writes index variable {} of {}",
                    blocks[j].0, v, blocks[i].0
                ));
            }
        }
    }
    for i in 1..blocks.len() {
        let (name, sets, is_kernel) = &blocks[i];
        if *is_kernel && sep.kernel.opers.is_empty() {
            continue;
        }
        let ind = sets.ind_names();
        let prev_val = blocks[i - 1].1.val_simple_names();
        if ind.intersection(&prev_val).next().is_none() {
            violations.push(format!(
                "{} takes no index variable from {}",
                name,
                blocks[i - 1].0
            ));
        }
    }

    let kernel_vals = &blocks.last().expect("kernel block").1.val;
    let mut strictly = true;
    for (_, sets, is_kernel) in &blocks {
        if *is_kernel {
            continue;
        }
        let mut used: BTreeSet<&Variable> = sets.arg.iter().collect();
        used.extend(sets.ind.iter());
        if kernel_vals.iter().any(|v| used.contains(v)) {
            strictly = false;
        }
    }
    (violations, strictly)
}
