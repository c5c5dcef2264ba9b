//! Gateway/worker wire protocol: JSON messages in length-prefixed frames,
//! carried by sessions that detect a departed peer by end-of-stream or
//! missed heartbeats.

pub mod frame;
mod message;
mod session;
pub mod transport;

use thiserror::Error;

pub use frame::{decode, encode, FrameDecoder, MAX_FRAME};
pub use message::{Message, PROTOCOL_VERSION};
pub use session::{
    CloseReason, ConnId, HeartbeatAction, HeartbeatConfig, HeartbeatMonitor, Session,
    SessionConfig, SessionEvent, SessionEventKind,
};
pub use transport::{duplex, tcp_halves, ReadHalf, WriteHalf, DEFAULT_PORT};

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("frame of {len} bytes exceeds the {MAX_FRAME}-byte limit")]
    Oversize { len: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("unsupported protocol version {got} (expected {expected})")]
    UnsupportedVersion { got: u32, expected: u32 },
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("session closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
