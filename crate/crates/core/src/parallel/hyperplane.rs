//! Hyperplane detection: an integer normal separating every dependence.

use serde::Serialize;

use crate::dependence::{Bounds, IterVec};

use super::{ParallelError, PredecessorProgram};

/// A family of parallel planes `normal · it = c` covering the box, with
/// every dependence crossing strictly between planes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Hyperplane {
    pub normal: Vec<i64>,
    /// The plane constants attained over the box, ascending.
    pub offsets: Vec<i64>,
}

/// Distance vectors `iteration − read target` of the local-array reads.
/// Requires every read to have unit coefficients (each coordinate reads
/// `counter + constant`), otherwise distances vary across the box.
pub fn distance_vectors(prog: &PredecessorProgram) -> Result<Vec<IterVec>, ParallelError> {
    let counters = prog.counter_names();
    let mut out: Vec<IterVec> = Vec::new();
    for stmt in &prog.statements {
        for read in stmt.reads() {
            if !prog.local_arrays.contains(&read.array) {
                continue;
            }
            let mut d = Vec::with_capacity(counters.len());
            for (dim, expr) in read.point.iter().enumerate() {
                let unit =
                    expr.coeffs.len() == 1 && expr.coeffs.get(&counters[dim]).copied() == Some(1);
                if !unit {
                    return Err(ParallelError::NonConstantDistances(format!(
                        "read of {} at {} in coordinate {dim}",
                        read.array, stmt.label
                    )));
                }
                d.push(-expr.constant);
            }
            if !out.contains(&d) {
                out.push(d);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Smallest-coefficient integer normal with `h · d >= 1` for every
/// distance `d`, searched over `max|h_i| <= cap` in lexicographic order.
/// `None` when no such normal exists within the cap.
pub fn normal_for_distances(distances: &[IterVec], dims: usize, cap: i64) -> Option<Vec<i64>> {
    if dims == 0 {
        return None;
    }
    if distances.is_empty() {
        // No dependences: any plane family works; slice by the first axis.
        let mut h = vec![0; dims];
        h[0] = 1;
        return Some(h);
    }
    for max_norm in 0..=cap {
        let mut best: Option<(i64, Vec<i64>)> = None;
        let mut h = vec![-max_norm; dims];
        'candidates: loop {
            if h.iter().map(|v| v.abs()).max().unwrap_or(0) == max_norm
                && distances
                    .iter()
                    .all(|d| h.iter().zip(d).map(|(a, b)| a * b).sum::<i64>() >= 1)
            {
                let l1: i64 = h.iter().map(|v| v.abs()).sum();
                let candidate = (l1, h.clone());
                if best.as_ref().map(|b| candidate < *b).unwrap_or(true) {
                    best = Some(candidate);
                }
            }
            // Odometer step; carry past the first digit means exhausted.
            let mut dim = dims;
            loop {
                if dim == 0 {
                    break 'candidates;
                }
                dim -= 1;
                if h[dim] < max_norm {
                    h[dim] += 1;
                    for v in h.iter_mut().skip(dim + 1) {
                        *v = -max_norm;
                    }
                    break;
                }
            }
        }
        if let Some((_, h)) = best {
            return Some(h);
        }
    }
    None
}

/// Find a hyperplane for the program's dependences and the plane constants
/// it attains over the box.
pub fn find_hyperplane(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    cap: i64,
) -> Result<Option<Hyperplane>, ParallelError> {
    let distances = distance_vectors(prog)?;
    if distances.iter().any(|d| d.iter().all(|&v| v == 0)) {
        // A zero distance admits no separating plane.
        return Ok(None);
    }
    let Some(normal) = normal_for_distances(&distances, prog.depth(), cap) else {
        return Ok(None);
    };
    let mut offsets: Vec<i64> = bounds
        .points()
        .iter()
        .map(|p| normal.iter().zip(p).map(|(a, b)| a * b).sum())
        .collect();
    offsets.sort();
    offsets.dedup();
    Ok(Some(Hyperplane { normal, offsets }))
}

/// Box points grouped by plane constant, ascending: the schedule the
/// hyperplane induces.
pub fn hyperplane_groups(bounds: &Bounds, normal: &[i64]) -> Vec<(i64, Vec<IterVec>)> {
    let mut groups: std::collections::BTreeMap<i64, Vec<IterVec>> =
        std::collections::BTreeMap::new();
    for p in bounds.points() {
        let c: i64 = normal.iter().zip(&p).map(|(a, b)| a * b).sum();
        groups.entry(c).or_default().push(p);
    }
    groups.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::super::coschedulable_check;
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn skewed_distances_need_the_two_one_one_normal() {
        let distances: Vec<IterVec> =
            vec![vec![0, 1, 0], vec![0, 0, 1], vec![1, -1, 0], vec![1, 0, -1]];
        assert_eq!(normal_for_distances(&distances, 3, 4), Some(vec![2, 1, 1]));
    }

    #[test]
    fn single_distance_needs_a_unit_normal() {
        assert_eq!(
            normal_for_distances(&[vec![1, 0, 0]], 3, 4),
            Some(vec![1, 0, 0])
        );
    }

    #[test]
    fn contradictory_distances_have_no_normal() {
        assert_eq!(normal_for_distances(&[vec![0, 1], vec![0, -1]], 2, 4), None);
    }

    #[test]
    fn plane_stencil_gets_the_unit_normal() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 4);
        let h = find_hyperplane(&prog, &bounds, 4).unwrap().unwrap();
        assert_eq!(h.normal, vec![1, 1, 1]);
        assert_eq!(h.offsets, (3..=12).collect::<Vec<i64>>());
        let sets: Vec<Vec<IterVec>> = hyperplane_groups(&bounds, &h.normal)
            .into_iter()
            .map(|(_, ps)| ps)
            .collect();
        assert!(coschedulable_check(&prog, &bounds, &sets));
    }

    #[test]
    fn skew_stencil_gets_the_skewed_normal() {
        let prog = skew_stencil();
        let bounds = boxed(&prog, 4);
        let h = find_hyperplane(&prog, &bounds, 4).unwrap().unwrap();
        assert_eq!(h.normal, vec![2, 1, 1]);
        let sets: Vec<Vec<IterVec>> = hyperplane_groups(&bounds, &h.normal)
            .into_iter()
            .map(|(_, ps)| ps)
            .collect();
        assert!(coschedulable_check(&prog, &bounds, &sets));
    }

    #[test]
    fn distances_collected_per_read() {
        let prog = plane_stencil();
        let d = distance_vectors(&prog).unwrap();
        assert_eq!(
            d,
            vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, -1, 1], vec![1, 0, 0]]
        );
    }
}
