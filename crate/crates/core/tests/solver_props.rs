//! Completeness of the exact solver against exhaustive scans.

use proptest::prelude::*;

use loopsep_core::dependence::{
    solve_linear_equation, AccessRef, Bounds, ConnectionEquation, EqKind, IterVec, SolutionSet,
};
use loopsep_core::schema::{AffineExpr, IndexExpr};

fn affine_2d(ci: i64, cj: i64, c0: i64) -> AffineExpr {
    AffineExpr::constant(c0).add_term("i", ci).add_term("j", cj)
}

fn equation_2d(
    writer: Vec<(i64, i64, i64)>,
    reader: Vec<(i64, i64, i64)>,
    lo: i64,
    hi: i64,
) -> ConnectionEquation {
    ConnectionEquation {
        array: "a".to_string(),
        kind: EqKind::Flow,
        writer: AccessRef {
            label: "w".into(),
            indexes: writer
                .into_iter()
                .map(|(a, b, c)| IndexExpr::Affine(affine_2d(a, b, c)))
                .collect(),
        },
        reader: AccessRef {
            label: "r".into(),
            indexes: reader
                .into_iter()
                .map(|(a, b, c)| IndexExpr::Affine(affine_2d(a, b, c)))
                .collect(),
        },
        bounds: Bounds {
            counters: vec![("i".to_string(), lo, hi), ("j".to_string(), lo, hi)],
        },
    }
}

fn scan(eq: &ConnectionEquation, lo: i64, hi: i64) -> Vec<(IterVec, IterVec)> {
    let eval = |indexes: &[IndexExpr], i: i64, j: i64| -> Vec<i64> {
        indexes
            .iter()
            .map(|e| {
                e.as_affine()
                    .unwrap()
                    .eval(|v| match v {
                        "i" => Some(i),
                        "j" => Some(j),
                        _ => None,
                    })
                    .unwrap()
            })
            .collect()
    };
    let mut out = Vec::new();
    for i1 in lo..=hi {
        for j1 in lo..=hi {
            for i2 in lo..=hi {
                for j2 in lo..=hi {
                    if eval(&eq.writer.indexes, i1, j1) == eval(&eq.reader.indexes, i2, j2) {
                        out.push((vec![i1, j1], vec![i2, j2]));
                    }
                }
            }
        }
    }
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 96,
        .. ProptestConfig::default()
    })]

    #[test]
    fn enumerated_solutions_equal_exhaustive_scan(
        w in prop::collection::vec((-3i64..=3, -3i64..=3, -6i64..=6), 1..3),
        r_seed in prop::collection::vec((-3i64..=3, -3i64..=3, -6i64..=6), 1..3),
        lo in -3i64..=0,
        size in 0i64..=5,
    ) {
        // Writer and reader must agree on dimensionality.
        let dims = w.len();
        let mut r = r_seed;
        r.resize(dims, (1, 0, 0));
        let hi = lo + size;
        let eq = equation_2d(w, r, lo, hi);
        let got = match solve_linear_equation(&eq, &["i", "j"], 1_000_000) {
            SolutionSet::Enumerated { pairs } => pairs,
            SolutionSet::Empty => Vec::new(),
            other => panic!("unexpected {other:?}"),
        };
        prop_assert_eq!(got, scan(&eq, lo, hi));
    }
}
