//! Network capture: a framed binary protocol carrying start/stop control
//! messages and PV/depth/pose frames, a recording server that writes one
//! session per connection, and a replay client that simulates a device.

pub mod protocol;
pub mod replay;
pub mod server;

use thiserror::Error;

pub use protocol::{decode_message, encode_message, Codec, FramingError, Message};
pub use replay::{replay, ReplayReport};
pub use server::{CaptureServer, ConnectionOutcome, ServerHandle, DEFAULT_PORT};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error("network error: {0}")]
    Network(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Store(#[from] seedtrack_core::Error),
}

impl CaptureError {
    pub fn class(&self) -> &'static str {
        match self {
            CaptureError::Framing(_) => "FramingError",
            CaptureError::Network(_) => "NetworkError",
            CaptureError::Protocol(_) => "ProtocolError",
            CaptureError::Store(e) => e.class(),
        }
    }
}
