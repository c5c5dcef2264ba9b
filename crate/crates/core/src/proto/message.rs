use serde::{Deserialize, Serialize};

use super::ProtoError;
use crate::fsm::{ProfileReport, WorkOrder, WorkResult};
use crate::NodeId;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Message {
    Hello {
        node_id: NodeId,
        protocol_version: u32,
    },
    ProfileReport {
        node_id: NodeId,
        perf_column: Vec<f64>,
        acc: Vec<f64>,
    },
    Assign {
        request_id: u64,
        images: u64,
        level: u32,
        seed: u64,
    },
    Result {
        request_id: u64,
        node_id: NodeId,
        images_done: u64,
        top5_correct: u64,
        elapsed_ms: u64,
    },
    Ping,
    Pong,
    Bye,
}

impl Message {
    pub const TYPES: [&'static str; 7] =
        ["Hello", "ProfileReport", "Assign", "Result", "Ping", "Pong", "Bye"];

    pub fn hello(node_id: NodeId) -> Self {
        Message::Hello { node_id, protocol_version: PROTOCOL_VERSION }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::ProfileReport { .. } => "ProfileReport",
            Message::Assign { .. } => "Assign",
            Message::Result { .. } => "Result",
            Message::Ping => "Ping",
            Message::Pong => "Pong",
            Message::Bye => "Bye",
        }
    }

    /// Field-level invariants that the type system does not capture.
    pub fn validate(&self) -> Result<(), ProtoError> {
        match self {
            Message::Hello { protocol_version, .. } if *protocol_version != PROTOCOL_VERSION => {
                Err(ProtoError::UnsupportedVersion { got: *protocol_version, expected: PROTOCOL_VERSION })
            }
            Message::ProfileReport { perf_column, acc, .. } => {
                if perf_column.len() != acc.len() {
                    return Err(ProtoError::Invalid(format!(
                        "{} throughput entries but {} accuracy entries",
                        perf_column.len(),
                        acc.len()
                    )));
                }
                if perf_column.iter().chain(acc).any(|v| !v.is_finite()) {
                    return Err(ProtoError::Invalid("non-finite profile value".into()));
                }
                Ok(())
            }
            Message::Result { images_done, top5_correct, .. } if top5_correct > images_done => {
                Err(ProtoError::Invalid(format!(
                    "{top5_correct} correct out of {images_done} images"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl From<ProfileReport> for Message {
    fn from(r: ProfileReport) -> Self {
        Message::ProfileReport { node_id: r.node_id, perf_column: r.perf_column, acc: r.acc }
    }
}

impl From<&WorkOrder> for Message {
    fn from(o: &WorkOrder) -> Self {
        Message::Assign {
            request_id: o.request_id,
            images: o.images,
            level: o.level as u32,
            seed: o.seed,
        }
    }
}

impl From<WorkResult> for Message {
    fn from(r: WorkResult) -> Self {
        Message::Result {
            request_id: r.request_id,
            node_id: r.node_id,
            images_done: r.images_done,
            top5_correct: r.top5_correct,
            elapsed_ms: r.elapsed_ms,
        }
    }
}

impl Message {
    pub fn into_profile(self) -> Option<ProfileReport> {
        match self {
            Message::ProfileReport { node_id, perf_column, acc } => {
                Some(ProfileReport { node_id, perf_column, acc })
            }
            _ => None,
        }
    }

    /// An `Assign` addressed to `node`.
    pub fn into_order(self, node: &NodeId) -> Option<WorkOrder> {
        match self {
            Message::Assign { request_id, images, level, seed } => Some(WorkOrder {
                request_id,
                node_id: node.clone(),
                images,
                level: level as usize,
                seed,
            }),
            _ => None,
        }
    }

    pub fn into_result(self) -> Option<WorkResult> {
        match self {
            Message::Result { request_id, node_id, images_done, top5_correct, elapsed_ms } => {
                Some(WorkResult { request_id, node_id, images_done, top5_correct, elapsed_ms })
            }
            _ => None,
        }
    }
}
