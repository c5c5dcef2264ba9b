use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::request::InferenceRequest;
use crate::NodeId;

/// A node's profiled throughput and accuracy per approximation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub node_id: NodeId,
    pub perf_column: Vec<f64>,
    pub acc: Vec<f64>,
}

/// One node's share of a request, as sent on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkOrder {
    pub request_id: u64,
    pub node_id: NodeId,
    pub images: u64,
    pub level: usize,
    pub seed: u64,
}

/// Images completed against a [`WorkOrder`]. A node that fails part-way
/// reports what it finished before going away.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkResult {
    pub request_id: u64,
    pub node_id: NodeId,
    pub images_done: u64,
    pub top5_correct: u64,
    /// Simulated execution time of the reported images.
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// Local profiling finished.
    ProfilingDone(ProfileReport),
    /// A worker's profile reached the gateway.
    ProfileReceived(ProfileReport),
    WorkloadArrived(InferenceRequest),
    DistributionComputed(Assignment),
    BroadcastDone,
    /// The local executor finished its current order.
    LocalInferenceDone(WorkResult),
    NodeDisconnected(NodeId),
    AssignmentReceived(WorkOrder),
    ResultSent,
    /// A worker's result reached the gateway.
    ResultReceived(WorkResult),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventTag {
    ProfilingDone,
    ProfileReceived,
    WorkloadArrived,
    DistributionComputed,
    BroadcastDone,
    LocalInferenceDone,
    NodeDisconnected,
    AssignmentReceived,
    ResultSent,
    ResultReceived,
}

impl EventTag {
    pub const ALL: [EventTag; 10] = [
        EventTag::ProfilingDone,
        EventTag::ProfileReceived,
        EventTag::WorkloadArrived,
        EventTag::DistributionComputed,
        EventTag::BroadcastDone,
        EventTag::LocalInferenceDone,
        EventTag::NodeDisconnected,
        EventTag::AssignmentReceived,
        EventTag::ResultSent,
        EventTag::ResultReceived,
    ];
}

impl fmt::Display for EventTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Event {
    pub fn tag(&self) -> EventTag {
        match self {
            Event::ProfilingDone(_) => EventTag::ProfilingDone,
            Event::ProfileReceived(_) => EventTag::ProfileReceived,
            Event::WorkloadArrived(_) => EventTag::WorkloadArrived,
            Event::DistributionComputed(_) => EventTag::DistributionComputed,
            Event::BroadcastDone => EventTag::BroadcastDone,
            Event::LocalInferenceDone(_) => EventTag::LocalInferenceDone,
            Event::NodeDisconnected(_) => EventTag::NodeDisconnected,
            Event::AssignmentReceived(_) => EventTag::AssignmentReceived,
            Event::ResultSent => EventTag::ResultSent,
            Event::ResultReceived(_) => EventTag::ResultReceived,
        }
    }
}
