//! The selection objective shared by the dynamic program and the exhaustive
//! oracle.
//!
//! Throughput is quantized to a grid of [`PERF_RESOLUTION`] inferences/sec and
//! accuracy to parts per million so every comparison is exact integer
//! arithmetic. A level vector is ranked, best first, by:
//!
//! 1. meeting the throughput requirement;
//! 2. the shallowest possible deepest level (no node approximates more than
//!    the cluster as a whole has to);
//! 3. highest throughput-weighted accuracy `sum(p * acc) / sum(p)`;
//! 4. smallest L1 distance between each node's throughput and its
//!    proportional share of the requirement;
//! 5. lexicographically smallest level vector in node order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::table::ProfilingTable;

/// Grid step, in inferences/sec, for throughput values inside the solver.
pub const PERF_RESOLUTION: f64 = 0.01;

const ACC_SCALE: f64 = 1e6;

/// Throughput in grid units.
pub fn quantize_perf(perf: f64) -> i64 {
    (perf / PERF_RESOLUTION).round() as i64
}

/// Smallest grid value that satisfies a requirement of `perf_req`.
pub fn perf_threshold(perf_req: f64) -> i64 {
    // The epsilon keeps 0.07 / 0.01 = 7.000000000000001 from rounding up.
    ((perf_req / PERF_RESOLUTION) - 1e-6).ceil() as i64
}

pub fn quantize_accuracy(acc: f64) -> i64 {
    (acc * ACC_SCALE).round() as i64
}

/// Rank of one level vector under the objective.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub feasible: bool,
    pub deepest_level: usize,
    /// Sum of node throughputs, in grid units.
    pub perf_sum: i64,
    /// Sum of throughput (grid units) times accuracy (ppm).
    pub accuracy_sum: i128,
    /// L1 distance to the per-node targets, in grid units.
    pub deviation: i64,
    pub levels: Vec<usize>,
}

impl Score {
    /// Throughput-weighted accuracy as a fraction.
    pub fn weighted_accuracy(&self) -> f64 {
        if self.perf_sum == 0 {
            return 0.0;
        }
        self.accuracy_sum as f64 / self.perf_sum as f64 / ACC_SCALE
    }

    pub fn throughput(&self) -> f64 {
        self.perf_sum as f64 * PERF_RESOLUTION
    }

    /// `Less` when `self` ranks ahead of `other`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .feasible
            .cmp(&self.feasible)
            .then(self.deepest_level.cmp(&other.deepest_level))
            .then_with(|| {
                // Higher ratio first: compare a1/s1 against a2/s2 by cross-multiplying.
                let lhs = self.accuracy_sum * other.perf_sum as i128;
                let rhs = other.accuracy_sum * self.perf_sum as i128;
                rhs.cmp(&lhs)
            })
            .then(self.deviation.cmp(&other.deviation))
            .then_with(|| self.levels.cmp(&other.levels))
    }

    pub fn beats(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Less
    }
}

/// A profiling table on the integer grid, with the per-node targets and the
/// throughput threshold for one request.
#[derive(Debug, Clone)]
pub struct QuantizedProblem {
    /// `perf[level][node]` in grid units.
    pub perf: Vec<Vec<i64>>,
    pub accuracy: Vec<i64>,
    pub targets: Vec<i64>,
    pub threshold: i64,
}

impl QuantizedProblem {
    pub fn new(table: &ProfilingTable, perf_req: f64, targets: &[f64]) -> Self {
        assert_eq!(targets.len(), table.nodes(), "one target per node");
        Self {
            perf: table
                .rows()
                .iter()
                .map(|r| r.iter().copied().map(quantize_perf).collect())
                .collect(),
            accuracy: table
                .catalog()
                .accuracies()
                .into_iter()
                .map(quantize_accuracy)
                .collect(),
            targets: targets.iter().copied().map(quantize_perf).collect(),
            threshold: perf_threshold(perf_req),
        }
    }

    pub fn nodes(&self) -> usize {
        self.targets.len()
    }

    pub fn levels(&self) -> usize {
        self.perf.len()
    }

    pub fn row_total(&self, level: usize) -> i64 {
        self.perf[level].iter().sum()
    }

    pub fn score(&self, levels: &[usize]) -> Score {
        let mut perf_sum = 0i64;
        let mut accuracy_sum = 0i128;
        let mut deviation = 0i64;
        for (node, &level) in levels.iter().enumerate() {
            let p = self.perf[level][node];
            perf_sum += p;
            accuracy_sum += p as i128 * self.accuracy[level] as i128;
            deviation += (p - self.targets[node]).abs();
        }
        Score {
            feasible: perf_sum >= self.threshold,
            deepest_level: levels.iter().copied().max().unwrap_or(0),
            perf_sum,
            accuracy_sum,
            deviation,
            levels: levels.to_vec(),
        }
    }
}

/// Splits `perf_req` across nodes in proportion to their level-0 throughput.
pub fn board_targets(table: &ProfilingTable, perf_req: f64) -> Vec<f64> {
    let total = table.row_total(0);
    table.row(0).iter().map(|p| perf_req * p / total).collect()
}
