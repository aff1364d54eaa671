//! Command-line surface for the loopsep toolkit.
//!
//! Pipeline commands over `.sch` files: `check` (structural validation),
//! `separate` (controller/kernel separation with optional verification),
//! `analyze` (connection equations, exact solutions, execution oracle),
//! and `schedule` (wavefronts, hyperplane, order-independence replay).
//!
//! Exit codes: 0 success, 1 analysis-level failure, 2 usage/parse/io
//! failure. Reports are deterministic for a fixed seed.

use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use loopsep_core::dependence::{
    build_connection_equations, classify, extract_nest, resolve_bounds, solve_linear_equation,
    solver_vs_oracle, Classification, SolutionSet,
};
use loopsep_core::interp::{
    parse_diagram, t_equal_check, Diagram, Memory, TEqualConfig, Value, Verdict,
};
use loopsep_core::normalize::{
    apply_separation, check_l_schema, forward_violations, verify_controller_count,
};
use loopsep_core::parallel::{
    coschedulable_check, find_hyperplane, hyperplane_groups, predecessor_program,
    replay_lexicographic, replay_wavefronts, schedule_wavefronts, validate_predecessors,
};
use loopsep_core::schema::{validate, InstrKind, Label, Schema};
use loopsep_core::text::{parse_schema, pretty_print};

#[derive(Parser)]
#[command(
    name = "loopsep",
    about = "Loop dependence analysis over program schemas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Output format.
    #[arg(long, default_value = "text")]
    format: String,
    /// Seed for randomized interpretations and replays.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step budget for every execution.
    #[arg(long, default_value_t = 1_000_000)]
    fuel: u64,
    /// Enumeration cap for equation solving.
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
    /// Per-counter bounds, e.g. `k=1..8,i=1..8` (overrides `for` headers
    /// and the bounds file).
    #[arg(long)]
    bounds: Option<String>,
    /// Sidecar bounds file: the same `name=lo..hi` entries, one per line
    /// or comma-separated.
    #[arg(long)]
    bounds_file: Option<String>,
}

impl CommonOpts {
    /// Merge bounds overrides: sidecar file first, `--bounds` on top.
    fn bound_overrides(&self) -> Result<BTreeMap<String, (i64, i64)>, String> {
        let mut merged = BTreeMap::new();
        if let Some(path) = &self.bounds_file {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            let joined = text
                .lines()
                .map(|l| l.split("//").next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(",");
            merged.extend(parse_bounds_flag(Some(&joined))?);
        }
        merged.extend(parse_bounds_flag(self.bounds.as_deref())?);
        Ok(merged)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a schema: determinedness, wiring, loop structure, forward
    /// orientation.
    Check {
        path: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Separate a loop body into controllers and a kernel.
    Separate {
        path: String,
        /// Label of the loop to separate (defaults to the only loop).
        #[arg(long = "loop")]
        loop_label: Option<String>,
        /// Verify the transform: randomized equivalence trials plus the
        /// symbolic nesting-depth witness.
        #[arg(long, value_name = "TRIALS", num_args = 0..=1, default_missing_value = "100")]
        verify: Option<u32>,
        /// Diagram file driving the symbolic run (default answers every
        /// atom with false, which runs each loop body once).
        #[arg(long)]
        diagram: Option<String>,
        /// Start values for the symbolic run, e.g. `N=2,M=3`.
        #[arg(long)]
        start: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build, classify, and solve the connection equations of a counted
    /// nest.
    Analyze {
        path: String,
        /// Also run the execution oracle and compare it with the solver.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Schedule a predecessor-form program into wavefronts.
    Schedule {
        path: String,
        /// Verify order independence by replaying with permuted fronts.
        #[arg(long, value_name = "SEED")]
        replay: Option<u64>,
        /// Coefficient cap for the hyperplane search.
        #[arg(long, default_value_t = 4)]
        hyperplane_cap: i64,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { path, common } => cmd_check(&path, &common),
        Command::Separate {
            path,
            loop_label,
            verify,
            diagram,
            start,
            common,
        } => cmd_separate(
            &path,
            loop_label.as_deref(),
            verify,
            diagram.as_deref(),
            start.as_deref(),
            &common,
        ),
        Command::Analyze {
            path,
            oracle,
            common,
        } => cmd_analyze(&path, oracle, &common),
        Command::Schedule {
            path,
            replay,
            hyperplane_cap,
            common,
        } => cmd_schedule(&path, replay, hyperplane_cap, &common),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

/// Usage-level failures (io, parse, flags) end up as `Err` and exit 2.
type CmdResult = Result<ExitCode, String>;

fn load_schema(path: &str) -> Result<Schema, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    parse_schema(&text).map_err(|e| format!("{path}:{e}"))
}

fn parse_bounds_flag(spec: Option<&str>) -> Result<BTreeMap<String, (i64, i64)>, String> {
    let mut out = BTreeMap::new();
    let Some(spec) = spec else {
        return Ok(out);
    };
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, range) = part
            .split_once('=')
            .ok_or_else(|| format!("bad bounds entry '{part}', expected name=lo..hi"))?;
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| format!("bad bounds range '{range}', expected lo..hi"))?;
        let lo: i64 = lo.trim().parse().map_err(|_| format!("bad bound '{lo}'"))?;
        let hi: i64 = hi.trim().parse().map_err(|_| format!("bad bound '{hi}'"))?;
        if lo > hi {
            return Err(format!("empty bounds for {name}: {lo}..{hi}"));
        }
        out.insert(name.trim().to_string(), (lo, hi));
    }
    Ok(out)
}

fn parse_start_flag(spec: Option<&str>) -> Result<Vec<(String, i64)>, String> {
    let mut out = Vec::new();
    let Some(spec) = spec else {
        return Ok(out);
    };
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| format!("bad start entry '{part}', expected name=value"))?;
        let value: i64 = value
            .trim()
            .parse()
            .map_err(|_| format!("bad start value '{value}'"))?;
        out.push((name.trim().to_string(), value));
    }
    Ok(out)
}

fn emit_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable report")
    );
}

fn cmd_check(path: &str, common: &CommonOpts) -> CmdResult {
    let schema = load_schema(path)?;
    let validation = validate(&schema);
    let l = check_l_schema(&schema);
    let forward = if l.is_empty() {
        Some(forward_violations(&schema))
    } else {
        None
    };

    let ok = validation.is_empty()
        && l.is_empty()
        && forward.as_ref().map(|f| f.is_empty()).unwrap_or(false);

    if common.format == "json" {
        let report = json!({
            "valid": ok,
            "validation": validation.violations,
            "order_violations": l.order,
            "recursion": l.recursion,
            "forward_violations": forward,
        });
        emit_json(&report);
    } else {
        if ok {
            println!("ok: determined, loop-structured, forward oriented");
        }
        for v in &validation.violations {
            println!("validation: {}{}", prefix(&v.scope), v.message);
        }
        for v in &l.order {
            println!(
                "order: {}edge {} -> {} closes a label cycle",
                prefix(&v.scope),
                v.label,
                v.target
            );
        }
        for name in &l.recursion {
            println!("recursion: recursive procedure {name}");
        }
        match &forward {
            Some(fwd) => {
                for v in fwd {
                    println!(
                        "forward: {}{} writes index variable {} used by {}",
                        prefix(&v.scope),
                        v.writer,
                        v.var,
                        v.user
                    );
                }
            }
            None => println!("forward: skipped (schema is not loop-structured)"),
        }
    }
    Ok(exit_flag(ok))
}

fn prefix(scope: &str) -> String {
    if scope.is_empty() {
        String::new()
    } else {
        format!("[{scope}] ")
    }
}

fn exit_flag(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn pick_loop(schema: &Schema, requested: Option<&str>) -> Result<Label, String> {
    if let Some(name) = requested {
        return Ok(Label::new(name));
    }
    let mut loops = Vec::new();
    for (_, block) in schema.all_schemas() {
        for instr in &block.opers {
            if matches!(instr.kind, InstrKind::Loop { .. }) {
                loops.push(instr.label.clone());
            }
        }
    }
    match loops.len() {
        1 => Ok(loops.pop().expect("one loop")),
        0 => Err("no loop instruction in the schema".to_string()),
        _ => Err(format!(
            "several loops ({}); pick one with --loop",
            loops
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )),
    }
}

fn cmd_separate(
    path: &str,
    loop_label: Option<&str>,
    verify: Option<u32>,
    diagram_path: Option<&str>,
    start: Option<&str>,
    common: &CommonOpts,
) -> CmdResult {
    let schema = load_schema(path)?;
    let validation = validate(&schema);
    if !validation.is_empty() {
        for v in &validation.violations {
            eprintln!("invalid schema: {}{}", prefix(&v.scope), v.message);
        }
        return Ok(ExitCode::from(1));
    }
    let target = pick_loop(&schema, loop_label)?;
    let (transformed, sep, report) = match apply_separation(&schema, &target) {
        Ok(parts) => parts,
        Err(e) => {
            eprintln!("separation failed: {e}");
            return Ok(ExitCode::from(1));
        }
    };

    let mut ok = report.set_condition_violations.is_empty();
    let mut verification = serde_json::Value::Null;
    if let Some(trials) = verify {
        let config = TEqualConfig {
            trials,
            fuel: common.fuel,
            seed: common.seed,
            modulus: 7,
        };
        let verdict = t_equal_check(&schema, &transformed, config)
            .map_err(|e| format!("verification: {e}"))?;
        let counterexample = match &verdict {
            Verdict::NoCounterExampleFound => serde_json::Value::Null,
            Verdict::CounterExample(ce) => {
                ok = false;
                json!({"trial": ce.trial, "detail": ce.detail})
            }
        };

        let diagram = match diagram_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{p}: {e}"))?;
                parse_diagram(&text).map_err(|e| format!("{p}:{e}"))?
            }
            None => Diagram::with_default(false),
        };
        let mut memory = Memory::herbrand();
        for (name, value) in parse_start_flag(start)? {
            memory.set_simple(&name, Value::Int(value));
        }
        let depth = match verify_controller_count(&sep, &diagram, memory, common.fuel) {
            Ok(d) => {
                if !d.consistent {
                    ok = false;
                }
                serde_json::to_value(&d).expect("serializable")
            }
            Err(e) => {
                ok = false;
                json!({"error": e.to_string()})
            }
        };
        verification = json!({
            "t_equal": {"trials": trials, "counterexample": counterexample},
            "depth": depth,
        });
    }

    let schema_text = pretty_print(&transformed);
    if common.format == "json" {
        let value = json!({
            "report": report,
            "verification": verification,
            "schema": schema_text,
        });
        emit_json(&value);
    } else {
        println!(
            "controllers: {}  strictly_separated: {}",
            report.controller_count, report.strictly_separated
        );
        for (i, level) in report.levels.iter().enumerate() {
            println!(
                "level {}: [{}] stops at [{}]",
                i + 1,
                join_labels(&level.labels),
                join_labels(&level.limited)
            );
        }
        println!("kernel: [{}]", join_labels(&report.kernel));
        for v in &report.set_condition_violations {
            println!("set-condition: {v}");
        }
        if !verification.is_null() {
            println!("verification: {verification}");
        }
        println!("---");
        print!("{schema_text}");
    }
    Ok(exit_flag(ok))
}

fn join_labels(labels: &[Label]) -> String {
    labels
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_analyze(path: &str, oracle: bool, common: &CommonOpts) -> CmdResult {
    let schema = load_schema(path)?;
    let nest = extract_nest(&schema).map_err(|e| e.to_string())?;
    let overrides = common.bound_overrides()?;
    let bounds = resolve_bounds(&nest, &overrides).map_err(|e| e.to_string())?;
    let counters = nest.counter_names();

    let equations = build_connection_equations(&nest, &bounds);
    let mut eq_reports = Vec::new();
    for eq in &equations {
        let class = classify(eq, &counters);
        let solution = match class {
            Classification::Linear => solve_linear_equation(eq, &counters, common.cap),
            ref other => SolutionSet::Unknown {
                reason: format!("{other} equations are not solvable statically"),
            },
        };
        eq_reports.push(json!({
            "array": eq.array,
            "kind": eq.kind,
            "writer": eq.writer,
            "reader": eq.reader,
            "class": class.to_string(),
            "solution": solution_value(&solution),
        }));
    }

    let mut ok = true;
    let mut oracle_value = serde_json::Value::Null;
    if oracle {
        match solver_vs_oracle(
            &schema,
            &nest,
            &bounds,
            common.seed,
            common.fuel,
            common.cap,
        ) {
            Ok(report) => {
                if !report.matched {
                    ok = false;
                }
                oracle_value = serde_json::to_value(&report).expect("serializable");
            }
            Err(e) => {
                oracle_value = json!({"error": e.to_string()});
            }
        }
    }

    if common.format == "dot" {
        let params =
            loopsep_core::dependence::infer_params(&nest, &bounds).map_err(|e| e.to_string())?;
        let mut interp = loopsep_core::interp::Interpretation::seeded(common.seed, 257);
        for (name, value) in params {
            interp = interp.with_start(&name, Value::Int(value));
        }
        let edges =
            loopsep_core::dependence::brute_force_dependences(&schema, &interp, common.fuel)
                .map_err(|e| e.to_string())?;
        print!("{}", loopsep_core::dependence::dot_graph(&edges));
        return Ok(exit_flag(ok));
    }

    if common.format == "json" {
        let report = json!({
            "counters": counters,
            "bounds": bounds,
            "equations": eq_reports,
            "oracle": oracle_value,
        });
        emit_json(&report);
    } else {
        println!("counters: {}", counters.join(", "));
        for (eq, value) in equations.iter().zip(&eq_reports) {
            println!(
                "{:?} {} @{} vs @{}: {} -> {}",
                eq.kind,
                eq.array,
                eq.writer.label,
                eq.reader.label,
                value["class"].as_str().unwrap_or("?"),
                summary(&value["solution"])
            );
        }
        if oracle {
            println!("oracle: {oracle_value}");
        }
    }
    Ok(exit_flag(ok))
}

fn solution_value(solution: &SolutionSet) -> serde_json::Value {
    match solution {
        SolutionSet::Enumerated { pairs } => {
            let capped: Vec<_> = pairs.iter().take(1000).collect();
            json!({
                "kind": "enumerated",
                "pair_count": pairs.len(),
                "pairs": capped,
                "truncated": pairs.len() > 1000,
            })
        }
        other => serde_json::to_value(other).expect("serializable"),
    }
}

fn summary(solution: &serde_json::Value) -> String {
    match solution["kind"].as_str() {
        Some("enumerated") => format!("{} pairs", solution["pair_count"]),
        Some("empty") => "no solutions".to_string(),
        Some("parametric") => format!(
            "parametric lattice, {} generators (cap exceeded)",
            solution["generators"]
                .as_array()
                .map(|a| a.len())
                .unwrap_or(0)
        ),
        Some("unknown") => solution["reason"].as_str().unwrap_or("unknown").to_string(),
        _ => "?".to_string(),
    }
}

fn cmd_schedule(
    path: &str,
    replay: Option<u64>,
    hyperplane_cap: i64,
    common: &CommonOpts,
) -> CmdResult {
    let schema = load_schema(path)?;
    let prog = predecessor_program(&schema).map_err(|e| e.to_string())?;
    let overrides = common.bound_overrides()?;
    let nest_like = loopsep_core::dependence::Nest {
        counters: prog.counters.clone(),
        statements: Vec::new(),
    };
    let bounds = resolve_bounds(&nest_like, &overrides).map_err(|e| e.to_string())?;

    let violations = validate_predecessors(&prog, &bounds);
    if !violations.is_empty() {
        if common.format == "json" {
            let capped: Vec<_> = violations.iter().take(20).collect();
            emit_json(&json!({
                "violations": capped,
                "violation_count": violations.len(),
            }));
        } else {
            for v in violations.iter().take(20) {
                println!(
                    "violation: {} at {:?} reads {} of {:?}",
                    v.label, v.point, v.array, v.target
                );
            }
            println!("total violations: {}", violations.len());
        }
        return Ok(ExitCode::from(1));
    }

    let fronts = schedule_wavefronts(&prog, &bounds).map_err(|e| e.to_string())?;
    let mut ok = true;

    // Soundness self-check: every predecessor sits in an earlier front.
    let mut level_of: BTreeMap<&Vec<i64>, usize> = BTreeMap::new();
    for f in &fronts {
        for p in &f.iterations {
            level_of.insert(p, f.level);
        }
    }
    'soundness: for f in &fronts {
        for p in &f.iterations {
            for q in prog.predecessors(&bounds, p) {
                if level_of.get(&q).map(|l| *l >= f.level).unwrap_or(true) {
                    ok = false;
                    break 'soundness;
                }
            }
        }
    }

    let hyperplane = match find_hyperplane(&prog, &bounds, hyperplane_cap) {
        Ok(Some(h)) => {
            let sets: Vec<Vec<Vec<i64>>> = hyperplane_groups(&bounds, &h.normal)
                .into_iter()
                .map(|(_, ps)| ps)
                .collect();
            let coschedulable = coschedulable_check(&prog, &bounds, &sets);
            if !coschedulable {
                ok = false;
            }
            json!({
                "normal": h.normal,
                "offsets": h.offsets,
                "coschedulable": coschedulable,
            })
        }
        Ok(None) => json!({"note": "no normal within the coefficient cap"}),
        Err(e) => json!({"note": e.to_string()}),
    };

    let mut replay_value = serde_json::Value::Null;
    if let Some(replay_seed) = replay {
        let lex = replay_lexicographic(&prog, &bounds, common.seed).map_err(|e| e.to_string())?;
        let mut order_independent = true;
        for round in 0..3u64 {
            let permuted = replay_wavefronts(
                &prog,
                &bounds,
                &fronts,
                common.seed,
                replay_seed.wrapping_add(round),
            )
            .map_err(|e| e.to_string())?;
            if permuted != lex {
                order_independent = false;
            }
        }
        if !order_independent {
            ok = false;
        }
        replay_value = json!({
            "seed": replay_seed,
            "permutations": 3,
            "order_independent": order_independent,
            "cells": lex.len(),
        });
    }

    match common.format.as_str() {
        "csv" => {
            println!("level,count");
            for f in &fronts {
                println!("{},{}", f.level, f.iterations.len());
            }
        }
        "json" => {
            let front_values: Vec<serde_json::Value> = fronts
                .iter()
                .map(|f| {
                    let members = if f.iterations.len() <= 64 {
                        serde_json::to_value(&f.iterations).expect("serializable")
                    } else {
                        serde_json::Value::Null
                    };
                    json!({
                        "level": f.level,
                        "size": f.iterations.len(),
                        "members": members,
                    })
                })
                .collect();
            emit_json(&json!({
                "bounds": bounds,
                "front_count": fronts.len(),
                "fronts": front_values,
                "hyperplane": hyperplane,
                "replay": replay_value,
                "sound": ok,
            }));
        }
        _ => {
            println!("fronts: {}", fronts.len());
            let sizes: Vec<String> = fronts
                .iter()
                .map(|f| f.iterations.len().to_string())
                .collect();
            println!("sizes: {}", sizes.join(","));
            println!("hyperplane: {hyperplane}");
            if !replay_value.is_null() {
                println!("replay: {replay_value}");
            }
        }
    }
    Ok(exit_flag(ok))
}
