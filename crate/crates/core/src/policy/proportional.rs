use super::dp::solve_dp;
use super::objective::{board_targets, QuantizedProblem};
use super::{finish, PolicyInput, PolicyOutput};
use crate::table::ProfilingTable;

/// First level whose cluster total meets `perf_req`, or `None` if even the
/// deepest level falls short.
pub fn stopping_index(table: &ProfilingTable, perf_req: f64) -> Option<usize> {
    let q = QuantizedProblem::new(table, perf_req, &vec![0.0; table.nodes()]);
    (0..q.levels()).find(|&level| q.row_total(level) >= q.threshold)
}

/// Heterogeneity-aware split with per-node model selection.
///
/// 1. Scan the cluster totals level by level and stop at the first level
///    that meets the requirement.
/// 2. Drop every deeper row.
/// 3. Split the requirement across nodes in proportion to their level-0
///    throughput; these per-node targets steer tie-breaking in the solver.
/// 4. Let [`solve_dp`] choose one level per node.
/// 5. Split the images in proportion to the chosen throughputs, using
///    largest-remainder rounding so the shares sum to the batch.
///
/// When no level meets the requirement every node is sent to the deepest
/// level (maximum throughput) and the output is flagged `PerfInfeasible`.
pub fn dispatch_proportional(input: &PolicyInput) -> PolicyOutput {
    let table = input.table();
    let perf_req = input.request().perf_req;
    let deepest = table.levels() - 1;

    let Some(stop) = stopping_index(table, perf_req) else {
        let levels = vec![deepest; table.nodes()];
        let perf_dist = table.row(deepest).to_vec();
        let predicted = perf_dist.iter().sum();
        return finish(input, levels, &perf_dist, predicted, false, deepest);
    };

    let pruned = table.truncate_levels(stop);
    let targets = board_targets(table, perf_req);
    let solution = solve_dp(&targets, &pruned, perf_req);
    let predicted = solution.perf_dist.iter().sum();
    finish(
        input,
        solution.levels,
        &solution.perf_dist,
        predicted,
        solution.feasible,
        stop,
    )
}
