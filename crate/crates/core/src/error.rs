use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid model catalog: {0}")]
    InvalidCatalog(String),

    #[error("invalid profiling table: {0}")]
    InvalidTable(String),

    #[error("invalid inference request: {0}")]
    InvalidRequest(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("undefined for an empty batch")]
    EmptyBatch,

    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}
