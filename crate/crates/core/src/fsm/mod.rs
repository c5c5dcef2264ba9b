//! Event-driven state machines for the gateway and worker resource
//! managers.
//!
//! Both machines are pure: a step consumes an event and returns the actions
//! the runtime should perform. They never do I/O or read a clock; simulated
//! time enters only through the `elapsed_ms` carried by results.

mod event;
mod gateway;
pub mod ledger;
mod worker;

use thiserror::Error;

pub use event::{Event, EventTag, ProfileReport, WorkOrder, WorkResult};
pub use gateway::{gateway_step, order_seed, Gateway, GatewayAction, GatewayConfig, GatewayState};
pub use ledger::{LedgerError, WorkLedger};
pub use worker::{worker_step, Worker, WorkerAction, WorkerState};

use crate::error::CoreError;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FsmError {
    #[error("event {event} is not allowed in state {state}")]
    ProtocolViolation { state: &'static str, event: EventTag },
    #[error("the gateway node `{0}` cannot be disconnected")]
    GatewayDisconnected(NodeId),
    #[error("invalid profile from `{node}`: {reason}")]
    InvalidProfile { node: NodeId, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(CoreError),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("unexpected result for request {request_id} from `{node}`")]
    UnexpectedResult { node: NodeId, request_id: u64 },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}
