//! Dataflow wavefront scheduling and order-independence replay.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dependence::{Bounds, IterVec};
use crate::interp::{mix64, mix_str};

use super::{ParallelError, PredArg, PredecessorProgram};

/// One parallel level: every member's in-box predecessors lie in strictly
/// smaller levels, and each member past level zero has a predecessor in
/// the level right below.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Wavefront {
    pub level: usize,
    pub iterations: Vec<IterVec>,
}

/// Level every point by frontier propagation: points whose reads are all
/// start data open level 0; a point becomes ready when its last in-box
/// predecessor is levelled, at one above the deepest of them. No full box
/// rescans per front, only the points that just received data move.
pub fn schedule_wavefronts(
    prog: &PredecessorProgram,
    bounds: &Bounds,
) -> Result<Vec<Wavefront>, ParallelError> {
    let points = bounds.points();
    let index: BTreeMap<&IterVec, usize> = points.iter().zip(0..).collect();

    let mut pending: Vec<usize> = vec![0; points.len()];
    let mut max_pred_level: Vec<usize> = vec![0; points.len()];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    let mut ready: Vec<usize> = Vec::new();

    for (i, p) in points.iter().enumerate() {
        let preds = prog.predecessors(bounds, p);
        pending[i] = preds.len();
        for q in &preds {
            let qi = *index.get(q).expect("predecessor inside the box");
            successors[qi].push(i);
        }
        if preds.is_empty() {
            ready.push(i);
        }
    }

    let mut level: Vec<Option<usize>> = vec![None; points.len()];
    let mut fronts: BTreeMap<usize, Vec<IterVec>> = BTreeMap::new();
    let mut done = 0usize;
    let mut frontier = ready;
    for &i in &frontier {
        level[i] = Some(0);
    }
    while let Some(i) = frontier.pop() {
        let l = level[i].expect("levelled before queued");
        fronts.entry(l).or_default().push(points[i].clone());
        done += 1;
        for &s in &successors[i] {
            max_pred_level[s] = max_pred_level[s].max(l);
            pending[s] -= 1;
            if pending[s] == 0 {
                level[s] = Some(max_pred_level[s] + 1);
                frontier.push(s);
            }
        }
    }
    if done != points.len() {
        return Err(ParallelError::CycleDetected);
    }

    Ok(fronts
        .into_iter()
        .map(|(level, mut iterations)| {
            iterations.sort();
            Wavefront { level, iterations }
        })
        .collect())
}

/// Final memory of a replay: one value per (array, iteration) produced.
pub type ReplayMemory = BTreeMap<(String, IterVec), u64>;

fn start_value(seed: u64, array: &str, q: &[i64]) -> u64 {
    let rendered: Vec<String> = q.iter().map(|v| v.to_string()).collect();
    mix_str(
        mix64(seed ^ 0x5741),
        &format!("{array}[{}]", rendered.join(",")),
    )
}

fn eval_point(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    memory: &mut ReplayMemory,
    seed: u64,
    p: &IterVec,
) -> Result<(), ParallelError> {
    let counters = prog.counter_names();
    for stmt in &prog.statements {
        let mut h = mix_str(seed, &stmt.fsym);
        for arg in &stmt.args {
            match arg {
                PredArg::Int(n) => h = mix64(h ^ (*n as u64)),
                PredArg::Read(read) => {
                    let q = read.target(&counters, p);
                    let local = prog.local_arrays.contains(&read.array);
                    let value = if local && bounds.contains(&q) && q < *p {
                        *memory
                            .get(&(read.array.clone(), q.clone()))
                            .ok_or(ParallelError::MissingValue(q))?
                    } else {
                        start_value(seed, &read.array, &q)
                    };
                    h = mix64(h ^ value);
                }
            }
        }
        memory.insert((stmt.target.clone(), p.clone()), h);
    }
    Ok(())
}

/// Replay the program point by point in lexicographic order.
pub fn replay_lexicographic(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    seed: u64,
) -> Result<ReplayMemory, ParallelError> {
    let mut memory = ReplayMemory::new();
    for p in bounds.points() {
        eval_point(prog, bounds, &mut memory, seed, &p)?;
    }
    Ok(memory)
}

/// Replay front by front, shuffling the order inside each front with
/// `perm_seed`. All earlier fronts are fully committed before a front
/// starts; the final memory must not depend on the within-front order.
pub fn replay_wavefronts(
    prog: &PredecessorProgram,
    bounds: &Bounds,
    fronts: &[Wavefront],
    seed: u64,
    perm_seed: u64,
) -> Result<ReplayMemory, ParallelError> {
    let mut memory = ReplayMemory::new();
    for front in fronts {
        let mut order: Vec<&IterVec> = front.iterations.iter().collect();
        shuffle(&mut order, mix64(perm_seed ^ front.level as u64));
        for p in order {
            eval_point(prog, bounds, &mut memory, seed, p)?;
        }
    }
    Ok(memory)
}

fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut state = seed;
    for i in (1..items.len()).rev() {
        state = mix64(state);
        let j = (state % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::parallel::predecessor_program;
    use crate::text::parse_schema;

    #[test]
    fn plane_stencil_fronts_match_the_planes() {
        let prog = plane_stencil();
        let bounds = boxed(&prog, 2);
        let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
        let sizes: Vec<usize> = fronts.iter().map(|f| f.iterations.len()).collect();
        assert_eq!(sizes, vec![1, 3, 3, 1]);
        assert_eq!(fronts[0].iterations, vec![vec![1, 1, 1]]);
        assert_eq!(
            fronts[1].iterations,
            vec![vec![1, 1, 2], vec![1, 2, 1], vec![2, 1, 1]]
        );
        // Levels are the plane constant k+i+j shifted to zero.
        for f in &fronts {
            for p in &f.iterations {
                assert_eq!((p[0] + p[1] + p[2] - 3) as usize, f.level);
            }
        }
    }

    #[test]
    fn plane_stencil_front_count_is_linear() {
        for n in [2i64, 4, 6, 8] {
            let prog = plane_stencil();
            let bounds = boxed(&prog, n);
            let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
            assert_eq!(fronts.len() as i64, 3 * n - 2);
            let total: usize = fronts.iter().map(|f| f.iterations.len()).sum();
            assert_eq!(total as i64, n * n * n);
        }
    }

    #[test]
    fn skewed_stencil_fronts_follow_the_skewed_planes() {
        for n in [2i64, 4] {
            let prog = skew_stencil();
            let bounds = boxed(&prog, n);
            let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
            assert_eq!(fronts.len() as i64, 4 * n - 3);
            for f in &fronts {
                for p in &f.iterations {
                    assert_eq!((2 * p[0] + p[1] + p[2] - 4) as usize, f.level);
                }
            }
        }
        let prog = skew_stencil();
        let bounds = boxed(&prog, 2);
        let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
        assert_eq!(fronts[1].iterations, vec![vec![1, 1, 2], vec![1, 2, 1]]);
    }

    #[test]
    fn wavefront_soundness_and_maximality() {
        for prog in [plane_stencil(), skew_stencil()] {
            let bounds = boxed(&prog, 4);
            let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
            let level_of: BTreeMap<&IterVec, usize> = fronts
                .iter()
                .flat_map(|f| f.iterations.iter().map(move |p| (p, f.level)))
                .collect();
            for f in &fronts {
                for p in &f.iterations {
                    let preds = prog.predecessors(&bounds, p);
                    for q in &preds {
                        assert!(level_of[q] < f.level, "predecessor in a later front");
                    }
                    if f.level > 0 {
                        assert!(
                            preds.iter().any(|q| level_of[q] == f.level - 1),
                            "no predecessor right below level {}",
                            f.level
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn no_reads_means_one_front() {
        let text = "li: for (i = 0; i < 3; i++) {\n  lj: for (j = 0; j < 3; j++) {\n    l1: u = f(s[i - 4, j - 4]) then le;\n    final le;\n  }\n}\n";
        let prog = predecessor_program(&parse_schema(text).unwrap()).unwrap();
        let bounds = Bounds {
            counters: vec![("i".into(), 0, 2), ("j".into(), 0, 2)],
        };
        let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
        assert_eq!(fronts.len(), 1);
        assert_eq!(fronts[0].iterations.len(), 9);
    }

    #[test]
    fn replay_is_order_independent() {
        for prog in [plane_stencil(), skew_stencil()] {
            let bounds = boxed(&prog, 3);
            let fronts = schedule_wavefronts(&prog, &bounds).unwrap();
            let lex = replay_lexicographic(&prog, &bounds, 11).unwrap();
            for perm_seed in 0..5 {
                let permuted = replay_wavefronts(&prog, &bounds, &fronts, 11, perm_seed).unwrap();
                assert_eq!(lex, permuted);
            }
        }
    }
}
