//! Exact integer solution of affine connection equations.
//!
//! The equation system `K_w(m1) = K_r(m2)` over the 2n counter unknowns is
//! brought to column echelon form with unimodular column operations
//! (extended-gcd elimination). Divisibility failures mean the equation has
//! no integer solutions at all. Otherwise the solution set is an affine
//! lattice `particular + span(generators)`; it is intersected with the
//! iteration box and enumerated when small enough, with the lattice
//! description returned as a fallback when the enumeration cap is hit.

use serde::Serialize;

use super::{Classification, ConnectionEquation, IterVec};
use crate::schema::AffineExpr;

/// Solutions of one connection equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolutionSet {
    /// No integer solutions exist (divisibility failure).
    Empty,
    /// Every in-box solution, as (writer iteration, reader iteration)
    /// pairs in lexicographic order.
    Enumerated { pairs: Vec<(IterVec, IterVec)> },
    /// The affine lattice of solutions; returned when enumerating would
    /// exceed the cap.
    Parametric {
        particular: Vec<i64>,
        generators: Vec<Vec<i64>>,
        cap_exceeded: bool,
    },
    /// The equation did not classify as linear.
    Unknown { reason: String },
}

/// Extended Euclid: returns `(g, x, y)` with `a*x + b*y = g`, `g >= 0`.
pub(crate) fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Solve `A x = b` over the integers. Returns a particular solution and a
/// basis of the null lattice, or `None` when no integer solution exists.
pub(crate) fn solve_system(
    rows: &[(Vec<i128>, i128)],
    nvars: usize,
) -> Option<(Vec<i128>, Vec<Vec<i128>>)> {
    let nrows = rows.len();
    let mut a: Vec<Vec<i128>> = rows.iter().map(|(r, _)| r.clone()).collect();
    let b: Vec<i128> = rows.iter().map(|(_, v)| *v).collect();
    let mut u: Vec<Vec<i128>> = (0..nvars)
        .map(|i| (0..nvars).map(|j| i128::from(i == j)).collect())
        .collect();

    let col_combine =
        |a: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, row: usize, c1: usize, c2: usize| {
            // Unimodular transform making a[row][c1] = gcd and a[row][c2] = 0.
            let (p, q) = (a[row][c1], a[row][c2]);
            let (g, x, y) = ext_gcd(p, q);
            debug_assert!(g != 0);
            let (p_g, q_g) = (p / g, q / g);
            for m in a.iter_mut().chain(u.iter_mut()) {
                let (v1, v2) = (m[c1], m[c2]);
                m[c1] = v1 * x + v2 * y;
                m[c2] = -v1 * q_g + v2 * p_g;
            }
        };

    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut pivot_col = 0usize;
    for row in 0..nrows {
        if pivot_col >= nvars {
            break;
        }
        // Bring a nonzero entry into the pivot column.
        let found = (pivot_col..nvars).find(|&c| a[row][c] != 0);
        let Some(c0) = found else { continue };
        if c0 != pivot_col {
            for m in a.iter_mut().chain(u.iter_mut()) {
                m.swap(pivot_col, c0);
            }
        }
        for c in pivot_col + 1..nvars {
            if a[row][c] != 0 {
                col_combine(&mut a, &mut u, row, pivot_col, c);
            }
        }
        if a[row][pivot_col] < 0 {
            for m in a.iter_mut().chain(u.iter_mut()) {
                m[pivot_col] = -m[pivot_col];
            }
        }
        pivots.push((row, pivot_col));
        pivot_col += 1;
    }

    // Forward substitution with divisibility checks.
    let mut y = vec![0i128; nvars];
    let mut pivot_of_row: Vec<Option<usize>> = vec![None; nrows];
    for (r, c) in &pivots {
        pivot_of_row[*r] = Some(*c);
    }
    for row in 0..nrows {
        // Contributions from pivot variables fixed in earlier rows.
        let mut residual = b[row];
        for (r, c) in &pivots {
            if *r < row {
                residual -= a[row][*c] * y[*c];
            }
        }
        match pivot_of_row[row] {
            Some(c) => {
                let d = a[row][c];
                if residual % d != 0 {
                    return None;
                }
                y[c] = residual / d;
            }
            None => {
                if residual != 0 {
                    return None;
                }
            }
        }
    }

    let apply = |u: &Vec<Vec<i128>>, y: &Vec<i128>| -> Vec<i128> {
        (0..nvars)
            .map(|i| (0..nvars).map(|j| u[i][j] * y[j]).sum())
            .collect()
    };
    let particular = apply(&u, &y);
    let pivot_cols: Vec<usize> = pivots.iter().map(|(_, c)| *c).collect();
    let basis: Vec<Vec<i128>> = (0..nvars)
        .filter(|c| !pivot_cols.contains(c))
        .map(|c| (0..nvars).map(|i| u[i][c]).collect())
        .collect();
    Some((particular, basis))
}

/// Row echelon form of a lattice basis (unimodular row operations), rows
/// ordered by leading column.
fn row_echelon(mut rows: Vec<Vec<i128>>) -> Vec<Vec<i128>> {
    let nvars = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut r = 0usize;
    for c in 0..nvars {
        let Some(pivot) = (r..rows.len())
            .filter(|&i| rows[i][c] != 0)
            .min_by_key(|&i| rows[i][c].unsigned_abs())
        else {
            continue;
        };
        rows.swap(r, pivot);
        let mut i = r + 1;
        while i < rows.len() {
            while rows[i][c] != 0 {
                let q = rows[i][c].div_euclid(rows[r][c]);
                let base = rows[r].clone();
                for (dst, src) in rows[i].iter_mut().zip(&base) {
                    *dst -= q * src;
                }
                if rows[i][c] != 0 {
                    rows.swap(r, i);
                }
            }
            i += 1;
        }
        if rows[r][c] < 0 {
            for v in rows[r].iter_mut() {
                *v = -*v;
            }
        }
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.retain(|row| row.iter().any(|&v| v != 0));
    rows
}

/// Enumerate the lattice points inside per-coordinate bounds. `None` when
/// more than `cap` candidates would have to be visited.
fn enumerate_lattice(
    particular: &[i128],
    basis: &[Vec<i128>],
    lo: &[i128],
    hi: &[i128],
    cap: usize,
) -> Option<Vec<Vec<i128>>> {
    let nvars = particular.len();
    let rows = row_echelon(basis.to_vec());
    let leading: Vec<usize> = rows
        .iter()
        .map(|r| r.iter().position(|&v| v != 0).expect("nonzero row"))
        .collect();

    // Coordinates before the first leading column are fixed.
    let first_lead = leading.first().copied().unwrap_or(nvars);
    for c in 0..first_lead {
        if particular[c] < lo[c] || particular[c] > hi[c] {
            return Some(Vec::new());
        }
    }

    struct Sweep<'a> {
        rows: &'a [Vec<i128>],
        leading: &'a [usize],
        lo: &'a [i128],
        hi: &'a [i128],
        cap: usize,
        visited: usize,
        out: Vec<Vec<i128>>,
    }

    impl Sweep<'_> {
        fn descend(&mut self, level: usize, point: &mut Vec<i128>) -> bool {
            let nvars = point.len();
            if level == self.rows.len() {
                self.visited += 1;
                if self.visited > self.cap {
                    return false;
                }
                if (0..nvars).all(|c| self.lo[c] <= point[c] && point[c] <= self.hi[c]) {
                    self.out.push(point.clone());
                }
                return true;
            }
            let lead = self.leading[level];
            let coeff = self.rows[level][lead];
            debug_assert!(coeff > 0);
            let base = point[lead];
            // lo <= base + t*coeff <= hi
            let t_min = div_ceil(self.lo[lead] - base, coeff);
            let t_max = div_floor(self.hi[lead] - base, coeff);
            for t in t_min..=t_max {
                self.visited += 1;
                if self.visited > self.cap {
                    return false;
                }
                for (slot, coeff) in point.iter_mut().zip(&self.rows[level]).skip(lead) {
                    *slot += t * coeff;
                }
                // Coordinates up to the next leading column are now fixed.
                let next_lead = self.leading.get(level + 1).copied().unwrap_or(nvars);
                let in_range =
                    (lead..next_lead).all(|c| self.lo[c] <= point[c] && point[c] <= self.hi[c]);
                let ok = !in_range || self.descend(level + 1, point);
                for (slot, coeff) in point.iter_mut().zip(&self.rows[level]).skip(lead) {
                    *slot -= t * coeff;
                }
                if !ok {
                    return false;
                }
            }
            true
        }
    }

    let mut point: Vec<i128> = particular.to_vec();
    let mut sweep = Sweep {
        rows: &rows,
        leading: &leading,
        lo,
        hi,
        cap,
        visited: 0,
        out: Vec::new(),
    };
    if sweep.descend(0, &mut point) {
        let mut out = sweep.out;
        out.sort();
        Some(out)
    } else {
        None
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    a.div_euclid(b) + i128::from(a.rem_euclid(b) != 0)
}

fn div_floor(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    a.div_euclid(b)
}

fn affine_row(
    expr: &AffineExpr,
    counters: &[&str],
    offset: usize,
    nvars: usize,
    sign: i128,
) -> (Vec<i128>, i128) {
    let mut row = vec![0i128; nvars];
    for (v, c) in &expr.coeffs {
        let slot = counters
            .iter()
            .position(|name| name == v)
            .expect("classified linear over counters");
        row[offset + slot] = sign * i128::from(*c);
    }
    (row, sign * i128::from(expr.constant))
}

/// Exact solution of a linear connection equation over writer/reader
/// iteration pairs. `cap` bounds the enumeration work.
pub fn solve_linear_equation(
    eq: &ConnectionEquation,
    counters: &[&str],
    cap: usize,
) -> SolutionSet {
    if super::classify(eq, counters) != Classification::Linear {
        return SolutionSet::Unknown {
            reason: "equation is not linear over the counters".to_string(),
        };
    }
    let n = counters.len();
    let nvars = 2 * n;
    let mut rows: Vec<(Vec<i128>, i128)> = Vec::new();
    for (w, r) in eq.writer.indexes.iter().zip(&eq.reader.indexes) {
        let w = w.as_affine().expect("linear classification");
        let r = r.as_affine().expect("linear classification");
        let (wrow, wconst) = affine_row(w, counters, 0, nvars, 1);
        let (rrow, rconst) = affine_row(r, counters, n, nvars, -1);
        let row: Vec<i128> = wrow.iter().zip(&rrow).map(|(a, b)| a + b).collect();
        // K_w(m1) - K_r(m2) = 0  =>  row . x = r_const - w_const
        rows.push((row, rconst.checked_neg().unwrap() - wconst));
    }

    let Some((particular, basis)) = solve_system(&rows, nvars) else {
        return SolutionSet::Empty;
    };

    let lo: Vec<i128> = [eq.bounds.lo(), eq.bounds.lo()]
        .concat()
        .iter()
        .map(|&v| i128::from(v))
        .collect();
    let hi: Vec<i128> = [eq.bounds.hi(), eq.bounds.hi()]
        .concat()
        .iter()
        .map(|&v| i128::from(v))
        .collect();

    match enumerate_lattice(&particular, &basis, &lo, &hi, cap) {
        Some(points) => {
            let pairs: Vec<(IterVec, IterVec)> = points
                .into_iter()
                .map(|p| {
                    (
                        p[..n].iter().map(|&v| v as i64).collect(),
                        p[n..].iter().map(|&v| v as i64).collect(),
                    )
                })
                .collect();
            debug_assert!(pairs.iter().all(|(m1, m2)| satisfies(eq, m1, m2)));
            SolutionSet::Enumerated { pairs }
        }
        None => SolutionSet::Parametric {
            particular: particular.iter().map(|&v| v as i64).collect(),
            generators: basis
                .iter()
                .map(|g| g.iter().map(|&v| v as i64).collect())
                .collect(),
            cap_exceeded: true,
        },
    }
}

/// Substitution check: do the two iterations hit the same cell?
pub fn satisfies(eq: &ConnectionEquation, m1: &[i64], m2: &[i64]) -> bool {
    let names: Vec<&str> = eq
        .bounds
        .counters
        .iter()
        .map(|(n, _, _)| n.as_str())
        .collect();
    let env = |point: &[i64]| {
        let pairs: Vec<(String, i64)> = names
            .iter()
            .zip(point)
            .map(|(n, v)| (n.to_string(), *v))
            .collect();
        pairs
    };
    let lookup = |pairs: &[(String, i64)], var: &str| -> Option<i64> {
        pairs.iter().find(|(n, _)| n == var).map(|(_, v)| *v)
    };
    let e1 = env(m1);
    let e2 = env(m2);
    eq.writer
        .indexes
        .iter()
        .zip(&eq.reader.indexes)
        .all(|(w, r)| {
            let wv = w.as_affine().and_then(|a| a.eval(|v| lookup(&e1, v)));
            let rv = r.as_affine().and_then(|a| a.eval(|v| lookup(&e2, v)));
            wv.is_some() && wv == rv
        })
}
