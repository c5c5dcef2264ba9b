//! Accuracy-aware workload distribution for DNN inference on heterogeneous
//! edge clusters.
//!
//! A gateway node splits each batched inference request across the
//! available worker nodes and picks, per node, which approximate model
//! variant to run so that the batch meets its throughput and accuracy
//! requirements. This crate holds the domain types, the dispatch policy and
//! its baselines, the gateway/worker state machines, the wire protocol and a
//! simulated inference executor.

pub mod assignment;
pub mod catalog;
pub mod error;
pub mod fsm;
pub mod outcome;
pub mod policy;
pub mod proto;
pub mod request;
pub mod simnode;
pub mod table;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use assignment::{weighted_accuracy, Assignment, NodeShare};
pub use catalog::{default_catalog, ModelCatalog, ModelVariant};
pub use error::CoreError;
pub use outcome::{NodeOutcome, RequestOutcome};
pub use request::InferenceRequest;
pub use table::ProfilingTable;

/// Static node identity, assigned in configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}
