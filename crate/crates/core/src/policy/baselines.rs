//! The three reference strategies: equal split, capacity-proportional split,
//! and equal split with one global approximation level.

use super::objective::{perf_threshold, quantize_perf};
use super::{finish, split_throughput, stopping_index, PolicyInput, PolicyOutput};

fn meets(predicted: f64, perf_req: f64) -> bool {
    quantize_perf(predicted) >= perf_threshold(perf_req)
}

fn baseline_stop(input: &PolicyInput) -> usize {
    stopping_index(input.table(), input.request().perf_req).unwrap_or(input.table().levels() - 1)
}

/// Equal split, every node on the most accurate model.
pub fn dispatch_uniform(input: &PolicyInput) -> PolicyOutput {
    let table = input.table();
    let n = table.nodes();
    let equal = vec![1.0; n];
    let predicted = split_throughput(&equal, table.row(0));
    let ok = meets(predicted, input.request().perf_req);
    finish(input, vec![0; n], &equal, predicted, ok, baseline_stop(input))
}

/// Split in proportion to level-0 capacity, no approximation.
pub fn dispatch_asymmetric(input: &PolicyInput) -> PolicyOutput {
    let table = input.table();
    let capacity = table.row(0).to_vec();
    let predicted = split_throughput(&capacity, &capacity);
    let ok = meets(predicted, input.request().perf_req);
    finish(input, vec![0; table.nodes()], &capacity, predicted, ok, baseline_stop(input))
}

/// Equal split with a single global level: the shallowest level at which
/// the slowest node can finish its equal share in time (`n * min_i perf`),
/// or the deepest level when none can. Accuracy is only checked afterwards.
pub fn dispatch_uniform_apx(input: &PolicyInput) -> PolicyOutput {
    let table = input.table();
    let n = table.nodes();
    let perf_req = input.request().perf_req;
    let equal = vec![1.0; n];
    let level = (0..table.levels())
        .find(|&l| meets(split_throughput(&equal, table.row(l)), perf_req))
        .unwrap_or(table.levels() - 1);
    let predicted = split_throughput(&equal, table.row(level));
    let ok = meets(predicted, perf_req);
    finish(input, vec![level; n], &equal, predicted, ok, baseline_stop(input))
}
