use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOutcome {
    pub node_id: NodeId,
    /// Simulated seconds from the first broadcast until the node's last result.
    pub elapsed: f64,
    pub images: u64,
    pub correct: u64,
}

/// What one request actually achieved on the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub request_id: u64,
    pub batch: u64,
    pub perf_req: f64,
    pub acc_req: f64,
    /// `batch / makespan`, where the makespan is the slowest node's elapsed time.
    pub achieved_throughput: f64,
    /// Fraction of images whose label was in the top five.
    pub empirical_top5: f64,
    pub makespan: f64,
    pub per_node: Vec<NodeOutcome>,
    /// Number of times the gateway recomputed the distribution mid-request.
    pub redistributions: u32,
    /// Images that were reported complete more than once.
    pub duplicate_images: u64,
    pub perf_violation: bool,
    pub acc_violation: bool,
}

impl RequestOutcome {
    pub fn images_completed(&self) -> u64 {
        self.per_node.iter().map(|n| n.images).sum()
    }

    pub fn satisfied_constraints(&self) -> u32 {
        u32::from(!self.perf_violation) + u32::from(!self.acc_violation)
    }
}
