//! Workload distribution strategies.
//!
//! [`dispatch_proportional`] is the heterogeneity- and accuracy-aware
//! policy; [`dispatch_uniform`], [`dispatch_asymmetric`] and
//! [`dispatch_uniform_apx`] are the baselines it is compared against, and
//! [`oracle_exhaustive`] is a brute-force reference for testing.

pub mod apportion;
mod baselines;
pub mod dp;
pub mod objective;
mod oracle;
mod proportional;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{dispatch_asymmetric, dispatch_uniform, dispatch_uniform_apx};
pub use dp::{solve_dp, DpSolution};
pub use objective::{Score, PERF_RESOLUTION};
pub use oracle::{oracle_exhaustive, ORACLE_MAX_VECTORS};
pub use proportional::{dispatch_proportional, stopping_index};

use crate::assignment::{weighted_accuracy_of, Assignment, NodeShare};
use crate::error::CoreError;
use crate::request::InferenceRequest;
use crate::table::ProfilingTable;

/// Slack on the accuracy comparison so that, e.g., 0.88 computed as
/// 0.8799999999999999 still meets a 0.88 floor.
pub const ACC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no available nodes")]
    NoNodes,
    #[error(transparent)]
    Invalid(#[from] CoreError),
    #[error("exhaustive search over {vectors} level vectors exceeds the limit of {limit}")]
    OracleTooLarge { vectors: u128, limit: u128 },
}

/// Profiling data of the available nodes plus the request to place on them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    table: ProfilingTable,
    request: InferenceRequest,
}

impl PolicyInput {
    pub fn new(table: ProfilingTable, request: InferenceRequest) -> Result<Self, PolicyError> {
        if table.nodes() == 0 {
            return Err(PolicyError::NoNodes);
        }
        request.validate_for(table.catalog())?;
        Ok(Self { table, request })
    }

    pub fn table(&self) -> &ProfilingTable {
        &self.table
    }

    pub fn request(&self) -> &InferenceRequest {
        &self.request
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyStatus {
    Feasible,
    /// No split reaches the throughput requirement; the assignment is the
    /// strategy's best effort.
    PerfInfeasible,
    /// Throughput is met but the batch accuracy falls below the floor.
    AccInfeasible,
}

impl PolicyStatus {
    fn from_flags(perf: bool, acc: bool) -> Self {
        match (perf, acc) {
            (true, true) => Self::Feasible,
            (false, _) => Self::PerfInfeasible,
            (true, false) => Self::AccInfeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub assignment: Assignment,
    /// Deepest table row the strategy considered: the first level whose
    /// cluster total meets the requirement, or the last level when none does.
    pub stopping_index: usize,
    pub status: PolicyStatus,
    /// Rank of the selected level vector under the shared objective.
    pub score: Score,
}

impl PolicyOutput {
    pub fn levels(&self) -> Vec<usize> {
        self.assignment.levels()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Proportional,
    Uniform,
    Asymmetric,
    UniformApx,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Proportional,
        Strategy::Uniform,
        Strategy::Asymmetric,
        Strategy::UniformApx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Proportional => "proportional",
            Strategy::Uniform => "uniform",
            Strategy::Asymmetric => "asymmetric",
            Strategy::UniformApx => "uniform_apx",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

pub fn dispatch(strategy: Strategy, input: &PolicyInput) -> PolicyOutput {
    match strategy {
        Strategy::Proportional => dispatch_proportional(input),
        Strategy::Uniform => dispatch_uniform(input),
        Strategy::Asymmetric => dispatch_asymmetric(input),
        Strategy::UniformApx => dispatch_uniform_apx(input),
    }
}

/// Throughput of a data-parallel split in which node `i` gets `fractions[i]`
/// of the batch and processes it at `perf[i]`: the batch completes when the
/// slowest node does.
pub fn split_throughput(fractions: &[f64], perf: &[f64]) -> f64 {
    let total: f64 = fractions.iter().sum();
    let worst = fractions
        .iter()
        .zip(perf)
        .filter(|(f, _)| **f > 0.0)
        .map(|(f, p)| f / total / p)
        .fold(0.0, f64::max);
    if worst > 0.0 {
        1.0 / worst
    } else {
        0.0
    }
}

/// Turns a level vector and split weights into a [`PolicyOutput`].
fn finish(
    input: &PolicyInput,
    levels: Vec<usize>,
    weights: &[f64],
    predicted_throughput: f64,
    feasible_perf: bool,
    stopping_index: usize,
) -> PolicyOutput {
    let table = input.table();
    let request = input.request();
    let images = apportion::largest_remainder(request.batch, weights);
    let shares: Vec<NodeShare> = table
        .node_ids()
        .iter()
        .zip(&levels)
        .zip(&images)
        .enumerate()
        .map(|(node, ((id, &level), &images))| NodeShare {
            node_id: id.clone(),
            images,
            level,
            predicted_perf: table.perf(level, node),
        })
        .collect();
    let predicted_accuracy = weighted_accuracy_of(
        shares.iter().map(|s| (s.images, s.level)),
        table.catalog(),
    )
    .expect("batch is non-empty and levels are in range");
    let feasible_acc = predicted_accuracy + ACC_TOLERANCE >= request.acc_req;
    let targets = objective::board_targets(table, request.perf_req);
    let score = objective::QuantizedProblem::new(table, request.perf_req, &targets).score(&levels);
    PolicyOutput {
        assignment: Assignment {
            shares,
            predicted_throughput,
            predicted_accuracy,
            feasible_perf,
            feasible_acc,
        },
        stopping_index,
        status: PolicyStatus::from_flags(feasible_perf, feasible_acc),
        score,
    }
}
