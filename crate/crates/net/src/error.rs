use crate::messages::CloseCode;
use bless_core::DecodeError;
use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("timed out")]
    Timeout,
    #[error("malformed message: {0}")]
    Decode(#[from] DecodeError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("server rejected: {0}")]
    ServerRejected(String),
    #[error("client rejected: {0}")]
    ClientRejected(String),
    #[error("connection closed by peer ({code}): {reason}")]
    Closed { code: CloseCode, reason: String },
    #[error("access denied")]
    AccessDenied,
    #[error("application error: {0}")]
    Application(String),
    #[error("discharge refused: {0}")]
    Refused(String),
    #[error("invalid grant: {0}")]
    BadGrant(String),
    #[error("unknown endpoint for {0}")]
    NoEndpoint(String),
}

impl NetError {
    /// Maps read timeouts to [`NetError::Timeout`].
    pub(crate) fn from_io(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => NetError::Timeout,
            _ => NetError::Io(e),
        }
    }
}
