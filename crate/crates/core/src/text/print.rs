//! Canonical pretty-printer for schemas.
//!
//! Output is deterministic: one instruction per line in definition order,
//! two-space block indentation, affine expressions with variables in name
//! order, counted loops re-emitted as `for` blocks, procedures in name
//! order. Parsing the output reproduces the schema structurally.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::schema::{
    AffineExpr, Arg, AssignRhs, GeneralExpr, IndexExpr, InstrKind, Instruction, LoopCond, Schema,
    Variable,
};

pub fn pretty_print(schema: &Schema) -> String {
    let mut out = String::new();
    print_block(schema, 0, &mut out);
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_block(s: &Schema, depth: usize, out: &mut String) {
    indent(depth, out);
    let _ = writeln!(out, "final {};", s.fin);

    let default_start = s
        .opers
        .first()
        .map(|i| i.label.clone())
        .unwrap_or_else(|| s.fin.clone());
    if s.start != default_start {
        indent(depth, out);
        let _ = writeln!(out, "start {};", s.start);
    }

    let mut inline_procs: BTreeSet<&str> = BTreeSet::new();
    for instr in &s.opers {
        if let InstrKind::Loop {
            body,
            cond: LoopCond::Counter { .. },
            ..
        } = &instr.kind
        {
            if s.procs.contains_key(body) {
                inline_procs.insert(body);
            }
        }
    }

    for instr in &s.opers {
        print_instruction(s, instr, depth, out);
    }

    for (name, proc) in &s.procs {
        if inline_procs.contains(name.as_str()) {
            continue;
        }
        indent(depth, out);
        let _ = writeln!(out, "proc {name} {{");
        print_block(proc, depth + 1, out);
        indent(depth, out);
        out.push_str("}\n");
    }
}

fn print_instruction(scope: &Schema, instr: &Instruction, depth: usize, out: &mut String) {
    match &instr.kind {
        InstrKind::Assign { target, rhs, next } => {
            indent(depth, out);
            let _ = writeln!(
                out,
                "{}: {} = {} then {};",
                instr.label,
                variable(target),
                assign_rhs(rhs),
                next
            );
        }
        InstrKind::Cond {
            psym,
            args,
            then_label,
            else_label,
        } => {
            indent(depth, out);
            let _ = writeln!(
                out,
                "{}: if {}({}) then {} else {};",
                instr.label,
                psym,
                args_list(args),
                then_label,
                else_label
            );
        }
        InstrKind::Call { body, next } => {
            indent(depth, out);
            let _ = writeln!(out, "{}: do {} then {};", instr.label, body, next);
        }
        InstrKind::Loop { body, cond, next } => match cond {
            LoopCond::While { psym, args } => {
                indent(depth, out);
                let _ = writeln!(
                    out,
                    "{}: do {} while {}({}) then {};",
                    instr.label,
                    body,
                    psym,
                    args_list(args),
                    next
                );
            }
            LoopCond::Counter { var, lo, hi } => {
                indent(depth, out);
                let _ = writeln!(
                    out,
                    "{}: for ({} = {}; {} < {}; {}++) {{",
                    instr.label,
                    var,
                    affine(lo),
                    var,
                    affine(hi),
                    var
                );
                if let Some(proc) = scope.procs.get(body) {
                    print_block(proc, depth + 1, out);
                }
                indent(depth, out);
                out.push_str("}\n");
            }
        },
    }
}

/// Canonical text of a variable, as the printer emits it.
pub fn variable_text(v: &Variable) -> String {
    variable(v)
}

/// Canonical text of an index expression, as the printer emits it.
pub fn index_expr_text(e: &IndexExpr) -> String {
    index_expr(e)
}

impl serde::Serialize for IndexExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&index_expr(self))
    }
}

impl serde::Serialize for AffineExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&affine(self))
    }
}

fn variable(v: &Variable) -> String {
    match v {
        Variable::Simple(name) => name.clone(),
        Variable::Indexed { array, indexes } => {
            let parts: Vec<String> = indexes.iter().map(index_expr).collect();
            format!("{array}[{}]", parts.join(", "))
        }
    }
}

fn index_expr(e: &IndexExpr) -> String {
    match e {
        IndexExpr::Affine(a) => affine(a),
        IndexExpr::General(g) => general(g, 1),
    }
}

pub(crate) fn affine(a: &AffineExpr) -> String {
    let mut out = String::new();
    let mut first = true;
    for (v, c) in &a.coeffs {
        if first {
            match *c {
                1 => out.push_str(v),
                -1 => {
                    let _ = write!(out, "-{v}");
                }
                c => {
                    let _ = write!(out, "{c}*{v}");
                }
            }
            first = false;
        } else {
            let sign = if *c < 0 { " - " } else { " + " };
            out.push_str(sign);
            match c.unsigned_abs() {
                1 => out.push_str(v),
                m => {
                    let _ = write!(out, "{m}*{v}");
                }
            }
        }
    }
    if first {
        let _ = write!(out, "{}", a.constant);
    } else if a.constant != 0 {
        let sign = if a.constant < 0 { " - " } else { " + " };
        let _ = write!(out, "{sign}{}", a.constant.unsigned_abs());
    }
    out
}

fn general(g: &GeneralExpr, parent_prec: u8) -> String {
    let prec = match g {
        GeneralExpr::Add(..) | GeneralExpr::Sub(..) => 1,
        GeneralExpr::Mul(..) => 2,
        _ => 3,
    };
    let body = match g {
        GeneralExpr::Const(n) => n.to_string(),
        GeneralExpr::Var(v) => v.clone(),
        GeneralExpr::Apply(f, args) => format!("{f}({})", args.join(", ")),
        GeneralExpr::Add(a, b) => format!("{} + {}", general(a, 1), general(b, 2)),
        GeneralExpr::Sub(a, b) => format!("{} - {}", general(a, 1), general(b, 2)),
        GeneralExpr::Mul(a, b) => format!("{} * {}", general(a, 2), general(b, 3)),
    };
    if prec < parent_prec {
        format!("({body})")
    } else {
        body
    }
}

fn assign_rhs(rhs: &AssignRhs) -> String {
    match rhs {
        AssignRhs::Apply { fsym, args } => format!("{fsym}({})", args_list(args)),
        AssignRhs::Affine(a) => affine(a),
        AssignRhs::LabelLit(l) => format!("'{l}"),
    }
}

fn args_list(args: &[Arg]) -> String {
    let parts: Vec<String> = args
        .iter()
        .map(|a| match a {
            Arg::Var(v) => variable(v),
            Arg::Int(n) => n.to_string(),
            Arg::LabelLit(l) => format!("'{l}"),
        })
        .collect();
    parts.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_schema;

    #[test]
    fn affine_rendering() {
        let a = AffineExpr::var("j").add_term("i", 2).with_constant(-3);
        assert_eq!(affine(&a), "2*i + j - 3");
        assert_eq!(affine(&AffineExpr::constant(0)), "0");
        let neg = AffineExpr::var("i").add_term("i", -2);
        assert_eq!(affine(&neg), "-i");
    }

    #[test]
    fn roundtrip_simple() {
        let text = "final lf;\nl1: x = f(y, a[i + 1]) then l2;\nl2: if p(x) then l1 else lf;\n";
        let s = parse_schema(text).unwrap();
        let printed = pretty_print(&s);
        let s2 = parse_schema(&printed).unwrap();
        assert_eq!(s, s2);
        assert_eq!(printed, pretty_print(&s2));
    }

    #[test]
    fn empty_body_procedure_prints_header_and_final_only() {
        let text = "final lf;\nl1: do P then lf;\nproc P {\n  final pf;\n}\n";
        let s = parse_schema(text).unwrap();
        let printed = pretty_print(&s);
        assert!(printed.contains("proc P {\n  final pf;\n}"), "{printed}");
        assert_eq!(parse_schema(&printed).unwrap(), s);
    }

    #[test]
    fn roundtrip_for_block() {
        let text = "for (k = 1; k < N + 1; k++) {\n  l1: s = add(s, k) then le;\n  final le;\n}\n";
        let s = parse_schema(text).unwrap();
        let printed = pretty_print(&s);
        let s2 = parse_schema(&printed).unwrap();
        assert_eq!(s, s2);
    }
}
