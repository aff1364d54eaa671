//! Parser/printer round-trip properties over generated schemas.

use proptest::prelude::*;
use std::collections::BTreeMap;

use loopsep_core::schema::{
    AffineExpr, Arg, AssignRhs, GeneralExpr, IndexExpr, InstrKind, Instruction, Label, LoopCond,
    Schema, Variable,
};
use loopsep_core::text::{parse_schema, pretty_print};

fn var_name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["v0", "v1", "v2", "w"]).prop_map(str::to_string)
}

fn array_name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["arr", "buf"]).prop_map(str::to_string)
}

fn fsym() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["f0", "f1", "g0"]).prop_map(str::to_string)
}

fn affine() -> impl Strategy<Value = AffineExpr> {
    (
        prop::collection::btree_map(var_name(), -3i64..=3, 0..3),
        -5i64..=5,
    )
        .prop_map(|(coeffs, constant)| {
            let mut a = AffineExpr::constant(constant);
            for (v, c) in coeffs {
                a = a.add_term(v, c);
            }
            a
        })
}

fn general() -> impl Strategy<Value = GeneralExpr> {
    let leaf = prop_oneof![
        (-4i64..=4).prop_map(GeneralExpr::Const),
        var_name().prop_map(GeneralExpr::Var),
        (fsym(), prop::collection::vec(var_name(), 1..3))
            .prop_map(|(f, args)| GeneralExpr::Apply(f, args)),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        (inner.clone(), inner).prop_map(|(a, b)| GeneralExpr::Mul(Box::new(a), Box::new(b)))
    })
}

fn index_expr() -> impl Strategy<Value = IndexExpr> {
    prop_oneof![
        3 => affine().prop_map(IndexExpr::Affine),
        1 => general().prop_filter("printer keeps only non-affine trees", |g| {
            // The parser folds affine trees into normal form, so a general
            // tree only survives a round trip when it is not affine.
            !is_affine(g)
        }).prop_map(IndexExpr::General),
    ]
}

/// Mirror of the parser's affine folding: a tree the parser would fold
/// never survives a round trip as a general tree.
fn fold(g: &GeneralExpr) -> Option<AffineExpr> {
    match g {
        GeneralExpr::Const(c) => Some(AffineExpr::constant(*c)),
        GeneralExpr::Var(v) => Some(AffineExpr::var(v.clone())),
        GeneralExpr::Apply(..) => None,
        GeneralExpr::Add(a, b) | GeneralExpr::Sub(a, b) => {
            let sign = if matches!(g, GeneralExpr::Add(..)) {
                1
            } else {
                -1
            };
            let fa = fold(a)?;
            let fb = fold(b)?;
            let mut out = fa;
            for (v, c) in fb.coeffs {
                out = out.add_term(v, c * sign);
            }
            let constant = out.constant + fb.constant * sign;
            Some(out.with_constant(constant))
        }
        GeneralExpr::Mul(a, b) => {
            let fa = fold(a)?;
            let fb = fold(b)?;
            let (scalar, base) = if fa.is_constant() {
                (fa.constant, fb)
            } else if fb.is_constant() {
                (fb.constant, fa)
            } else {
                return None;
            };
            let mut out = AffineExpr::constant(base.constant * scalar);
            for (v, c) in base.coeffs {
                out = out.add_term(v, c * scalar);
            }
            Some(out)
        }
    }
}

fn is_affine(g: &GeneralExpr) -> bool {
    fold(g).is_some()
}

fn variable() -> impl Strategy<Value = Variable> {
    prop_oneof![
        2 => var_name().prop_map(Variable::Simple),
        1 => (array_name(), prop::collection::vec(index_expr(), 1..3))
            .prop_map(|(a, ix)| Variable::indexed(a, ix)),
    ]
}

fn arg() -> impl Strategy<Value = Arg> {
    prop_oneof![
        4 => variable().prop_map(Arg::Var),
        1 => (-9i64..=9).prop_map(Arg::Int),
    ]
}

fn rhs() -> impl Strategy<Value = AssignRhs> {
    prop_oneof![
        3 => (fsym(), prop::collection::vec(arg(), 0..3))
            .prop_map(|(fsym, args)| AssignRhs::Apply { fsym, args }),
        2 => affine().prop_map(AssignRhs::Affine),
    ]
}

/// A block of chained instructions ending at `lf`, with optional counted
/// loops and procedure calls.
fn schema() -> impl Strategy<Value = Schema> {
    (1usize..5, prop::collection::vec((rhs(), variable()), 5))
        .prop_flat_map(|(n, payload)| {
            (
                Just(n),
                Just(payload),
                prop::collection::vec(prop::bool::ANY, n),
                prop::collection::vec(0usize..3, n),
            )
        })
        .prop_map(|(n, payload, is_for, branchiness)| {
            let fin = Label::new("lf");
            let label = |i: usize| Label::new(format!("s{i}"));
            let mut opers = Vec::new();
            let mut procs = BTreeMap::new();
            for i in 0..n {
                let next = if i + 1 < n { label(i + 1) } else { fin.clone() };
                let (rhs_case, target) = payload[i % payload.len()].clone();
                if is_for[i] {
                    // A one-statement counted body, printed as a for block.
                    let body_fin = Label::new(format!("bf{i}"));
                    let body = Schema {
                        opers: vec![Instruction {
                            label: Label::new(format!("b{i}")),
                            kind: InstrKind::Assign {
                                target: target.clone(),
                                rhs: rhs_case.clone(),
                                next: body_fin.clone(),
                            },
                        }],
                        start: Label::new(format!("b{i}")),
                        fin: body_fin,
                        procs: BTreeMap::new(),
                    };
                    let proc_name = format!("for_s{i}");
                    procs.insert(proc_name.clone(), body);
                    opers.push(Instruction {
                        label: label(i),
                        kind: InstrKind::Loop {
                            body: proc_name,
                            cond: LoopCond::Counter {
                                var: format!("c{i}"),
                                lo: AffineExpr::constant(0),
                                hi: AffineExpr::constant((branchiness[i] + 1) as i64),
                            },
                            next,
                        },
                    });
                } else if branchiness[i] == 2 {
                    opers.push(Instruction {
                        label: label(i),
                        kind: InstrKind::Cond {
                            psym: "p".to_string(),
                            args: vec![Arg::Var(Variable::simple("v0"))],
                            then_label: next.clone(),
                            else_label: fin.clone(),
                        },
                    });
                } else {
                    opers.push(Instruction {
                        label: label(i),
                        kind: InstrKind::Assign {
                            target,
                            rhs: rhs_case,
                            next,
                        },
                    });
                }
            }
            Schema {
                start: label(0),
                fin,
                opers,
                procs,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 128,
        .. ProptestConfig::default()
    })]

    #[test]
    fn parse_of_pretty_is_identity(s in schema()) {
        let printed = pretty_print(&s);
        let reparsed = parse_schema(&printed)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        prop_assert_eq!(&reparsed, &s, "printed:\n{}", printed);
        // And printing is a fixed point.
        prop_assert_eq!(pretty_print(&reparsed), printed);
    }
}

#[test]
fn unicode_identifiers_are_rejected_at_parse() {
    let err = parse_schema("final lf;\nl1: x\u{00e9} = f(y) then lf;\n").unwrap_err();
    assert!(err.span.line >= 1);
}

#[test]
fn parse_errors_carry_spans_inside_the_input() {
    let cases = [
        "l1: x = f(aa[ba[x]]) then lf;\n",
        "l1: x = then lf;\n",
        "final lf;\nfinal lg;\nl1: x = f(y) then lf;\n",
        "l1: x = f(y) then lf;\nl1: y = f(x) then lf;\n",
        "l1: x = f(y) then l1;\n",
    ];
    for text in cases {
        let err = parse_schema(text).unwrap_err();
        let lines: Vec<&str> = text.lines().collect();
        assert!(
            err.span.line >= 1 && err.span.line <= lines.len() + 1,
            "{err}"
        );
    }
}

#[test]
fn nested_array_index_message() {
    let err = parse_schema("final lf;\nl1: x = f(aa[ba[x]]) then lf;\n").unwrap_err();
    assert_eq!(err.message, "array index must be a simple variable");
    assert_eq!(err.span.line, 2);
}

#[test]
fn missing_final_label_is_reported() {
    let err = parse_schema("l1: x = f(y) then l1;\n").unwrap_err();
    assert!(err.message.contains("missing final label"), "{err}");
}
