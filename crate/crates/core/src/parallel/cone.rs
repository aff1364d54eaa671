//! Dependency cones and the independence / coschedulability checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dependence::{Bounds, IterVec};

use super::{ParallelError, PredecessorProgram};

/// The transitive in-box predecessor closure of an apex (apex excluded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cone {
    pub apex: IterVec,
    pub members: BTreeSet<IterVec>,
}

/// Shared memo for cone computations over one program and box.
pub struct ConeCache<'a> {
    prog: &'a PredecessorProgram,
    bounds: &'a Bounds,
    memo: BTreeMap<IterVec, BTreeSet<IterVec>>,
}

impl<'a> ConeCache<'a> {
    pub fn new(prog: &'a PredecessorProgram, bounds: &'a Bounds) -> Self {
        ConeCache {
            prog,
            bounds,
            memo: BTreeMap::new(),
        }
    }

    /// Memoized closure: cone(p) = preds(p) ∪ ⋃ cone(preds(p)).
    /// Predecessors are strictly smaller, so the recursion grounds out.
    pub fn cone(&mut self, p: &IterVec) -> BTreeSet<IterVec> {
        if let Some(done) = self.memo.get(p) {
            return done.clone();
        }
        let mut members = BTreeSet::new();
        for q in self.prog.predecessors(self.bounds, p) {
            let sub = self.cone(&q);
            members.extend(sub);
            members.insert(q);
        }
        self.memo.insert(p.clone(), members.clone());
        members
    }
}

/// Iterative frontier closure of the in-box predecessor relation.
pub fn cone_of(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    apex: &IterVec,
) -> Result<Cone, ParallelError> {
    if !bounds.contains(apex) {
        return Err(ParallelError::ApexOutsideBox(apex.clone()));
    }
    let mut members: BTreeSet<IterVec> = BTreeSet::new();
    let mut frontier: Vec<IterVec> = prog.predecessors(bounds, apex).into_iter().collect();
    while let Some(q) = frontier.pop() {
        if members.insert(q.clone()) {
            frontier.extend(prog.predecessors(bounds, &q));
        }
    }
    Ok(Cone {
        apex: apex.clone(),
        members,
    })
}

/// True iff no member's cone contains another member.
pub fn independent_set_check(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    points: &[IterVec],
) -> bool {
    let set: BTreeSet<&IterVec> = points.iter().collect();
    let mut cache = ConeCache::new(prog, bounds);
    for p in points {
        let cone = cache.cone(p);
        if cone.iter().any(|q| q != p && set.contains(q)) {
            return false;
        }
    }
    true
}

/// True iff running the sets in the given order never needs a value
/// produced in the same or a later set: for every point, every cone member
/// inside the scheduled region must belong to a strictly earlier set.
/// Values produced outside the region count as already available.
pub fn coschedulable_check(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    sets: &[Vec<IterVec>],
) -> bool {
    let mut rank: BTreeMap<&IterVec, usize> = BTreeMap::new();
    for (t, set) in sets.iter().enumerate() {
        for p in set {
            if !bounds.contains(p) || rank.insert(p, t).is_some() {
                // Out-of-box points or overlapping sets are not a schedule.
                return false;
            }
        }
    }
    let mut cache = ConeCache::new(prog, bounds);
    for (t, set) in sets.iter().enumerate() {
        for p in set {
            let cone = cache.cone(p);
            if cone
                .iter()
                .any(|q| rank.get(q).map(|u| *u >= t).unwrap_or(false))
            {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::schedule_wavefronts;
    use super::*;

    #[test]
    fn origin_has_an_empty_cone() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 2);
        let cone = cone_of(&prog, &bounds, &vec![1, 1, 1]).unwrap();
        assert!(cone.members.is_empty());
    }

    #[test]
    fn apex_outside_the_box_is_an_error() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 2);
        assert!(matches!(
            cone_of(&prog, &bounds, &vec![3, 1, 1]),
            Err(ParallelError::ApexOutsideBox(_))
        ));
    }

    #[test]
    fn iterative_and_memoized_closures_agree() {
        for prog in [plane_stencil(), skew_stencil()] {
            let bounds = boxed(&prog, 3);
            let mut cache = ConeCache::new(&prog, &bounds);
            for p in bounds.points() {
                let memoized = cache.cone(&p);
                let iterative = cone_of(&prog, &bounds, &p).unwrap().members;
                assert_eq!(memoized, iterative, "cone of {p:?}");
            }
        }
    }

    #[test]
    fn corner_cone_reaches_back_through_the_reads() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 3);
        let cone = cone_of(&prog, &bounds, &vec![2, 2, 2]).unwrap();
        assert!(cone.members.contains(&vec![1, 1, 1]));
        assert!(cone.members.contains(&vec![2, 2, 1]));
        // Everything in the cone lies strictly below the apex plane.
        assert!(cone.members.iter().all(|q| q[0] + q[1] + q[2] < 6));
    }

    #[test]
    fn wavefronts_are_independent_sets() {
        for prog in [plane_stencil(), skew_stencil()] {
            let bounds = boxed(&prog, 4);
            let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
            for f in &fronts {
                assert!(independent_set_check(&prog, &bounds, &f.iterations));
            }
        }
    }

    #[test]
    fn point_with_its_predecessor_is_not_independent() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 2);
        let points = vec![vec![2, 1, 1], vec![1, 1, 1]];
        assert!(!independent_set_check(&prog, &bounds, &points));
    }

    #[test]
    fn wavefront_order_is_coschedulable_and_its_reverse_is_not() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 3);
        let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
        let sets: Vec<Vec<IterVec>> = fronts.iter().map(|f| f.iterations.clone()).collect();
        assert!(coschedulable_check(&prog, &bounds, &sets));
        let reversed: Vec<Vec<IterVec>> = sets.iter().rev().cloned().collect();
        assert!(!coschedulable_check(&prog, &bounds, &reversed));
    }

    #[test]
    fn single_points_are_trivially_schedulable() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 2);
        assert!(independent_set_check(&prog, &bounds, &[vec![2, 2, 2]]));
        assert!(coschedulable_check(&prog, &bounds, &[vec![vec![1, 1, 1]]]));
    }
}
