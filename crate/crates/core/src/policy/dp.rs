//! Subset-sum style dynamic program choosing one level per node.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::objective::{QuantizedProblem, Score};
use crate::table::ProfilingTable;

/// Chosen throughput and level per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub perf_dist: Vec<f64>,
    pub levels: Vec<usize>,
    /// False when no level vector reaches the requirement; the levels are
    /// then all at the deepest row of the table.
    pub feasible: bool,
    pub score: Score,
}

#[derive(Debug, Clone)]
struct Partial {
    accuracy_sum: i128,
    deviation: i64,
    levels: Vec<usize>,
}

impl Partial {
    /// Ordering among prefixes that landed in the same state.
    fn better_than(&self, other: &Self) -> bool {
        self.accuracy_sum
            .cmp(&other.accuracy_sum)
            .reverse()
            .then(self.deviation.cmp(&other.deviation))
            .then_with(|| self.levels.cmp(&other.levels))
            .is_lt()
    }
}

/// Picks one level per node of `pruned` (rows are the candidate levels).
///
/// The state is `(node index, accumulated throughput on the grid, deepest
/// level so far)`. For a fixed final throughput and deepest level the
/// objective reduces to maximizing the accuracy sum, then minimizing
/// deviation, then the lexicographic level order, all of which decompose
/// over node prefixes; so each layer keeps only the best prefix per state.
/// The final pick compares the surviving states under the full ranking.
/// Levels are expanded deepest-first.
///
/// After pruning at the stopping index every feasible vector shares the same
/// deepest level, so the third state component collapses to one value.
pub fn solve_dp(targets: &[f64], pruned: &ProfilingTable, perf_req: f64) -> DpSolution {
    assert!(pruned.levels() >= 1 && pruned.nodes() >= 1, "empty table");
    let problem = QuantizedProblem::new(pruned, perf_req, targets);
    let m = problem.levels();
    let n = problem.nodes();

    let mut layer: HashMap<(i64, usize), Partial> = HashMap::new();
    layer.insert(
        (0, 0),
        Partial { accuracy_sum: 0, deviation: 0, levels: Vec::with_capacity(n) },
    );
    for node in 0..n {
        let mut next: HashMap<(i64, usize), Partial> = HashMap::with_capacity(layer.len() * m);
        for (&(sum, deepest), partial) in &layer {
            for level in (0..m).rev() {
                let p = problem.perf[level][node];
                let mut levels = partial.levels.clone();
                levels.push(level);
                let cand = Partial {
                    accuracy_sum: partial.accuracy_sum + p as i128 * problem.accuracy[level] as i128,
                    deviation: partial.deviation + (p - problem.targets[node]).abs(),
                    levels,
                };
                let key = (sum + p, deepest.max(level));
                match next.get(&key) {
                    Some(cur) if !cand.better_than(cur) => {}
                    _ => {
                        next.insert(key, cand);
                    }
                }
            }
        }
        layer = next;
    }

    let best = layer
        .into_iter()
        .filter(|((sum, _), _)| *sum >= problem.threshold)
        .map(|(_, partial)| problem.score(&partial.levels))
        .min_by(|a, b| a.rank_cmp(b));

    let (levels, feasible, score) = match best {
        Some(score) => (score.levels.clone(), true, score),
        None => {
            let levels = vec![m - 1; n];
            let score = problem.score(&levels);
            (levels, false, score)
        }
    };
    DpSolution {
        perf_dist: levels
            .iter()
            .enumerate()
            .map(|(node, &level)| pruned.perf(level, node))
            .collect(),
        levels,
        feasible,
        score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ModelCatalog;
    use crate::policy::objective::board_targets;
    use crate::NodeId;

    fn t1() -> ProfilingTable {
        ProfilingTable::new(
            vec![NodeId::from("a"), NodeId::from("b")],
            vec![vec![4.0, 6.0], vec![8.0, 12.0]],
            ModelCatalog::from_parts(&[0.92, 0.85], &[1.0, 0.5]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn t1_requirement_twelve() {
        let t = t1();
        let sol = solve_dp(&board_targets(&t, 12.0), &t, 12.0);
        assert!(sol.feasible);
        assert_eq!(sol.levels, vec![1, 0]);
        assert_eq!(sol.perf_dist, vec![8.0, 6.0]);
        assert!((sol.score.weighted_accuracy() - 0.88).abs() < 1e-12);
    }

    #[test]
    fn t1_requirement_ten() {
        let t = t1();
        let sol = solve_dp(&board_targets(&t, 10.0), &t, 10.0);
        assert_eq!(sol.levels, vec![0, 0]);
        assert_eq!(sol.perf_dist, vec![4.0, 6.0]);
    }

    #[test]
    fn single_surviving_row() {
        let t = t1().truncate_levels(0);
        let sol = solve_dp(&board_targets(&t, 9.0), &t, 9.0);
        assert!(sol.feasible);
        assert_eq!(sol.levels, vec![0, 0]);
        assert_eq!(sol.perf_dist, t.row(0).to_vec());
    }

    #[test]
    fn infeasible_returns_deepest_row() {
        let t = t1();
        let sol = solve_dp(&board_targets(&t, 25.0), &t, 25.0);
        assert!(!sol.feasible);
        assert_eq!(sol.levels, vec![1, 1]);
        assert_eq!(sol.perf_dist, vec![8.0, 12.0]);
    }

    #[test]
    fn lexicographic_order_breaks_full_ties() {
        // Identical nodes: (0,1) and (1,0) tie on throughput, accuracy and
        // deviation from the symmetric targets, so the lexicographic rule
        // picks (0,1).
        let t = ProfilingTable::new(
            vec![NodeId::from("a"), NodeId::from("b")],
            vec![vec![5.0, 5.0], vec![7.0, 7.0]],
            ModelCatalog::from_parts(&[0.9, 0.8], &[1.0, 0.5]).unwrap(),
        )
        .unwrap();
        let sol = solve_dp(&board_targets(&t, 11.0), &t, 11.0);
        assert_eq!(sol.levels, vec![0, 1]);
    }
}
