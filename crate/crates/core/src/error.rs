use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the core library reports. Each variant maps to a stable
/// class name (see [`Error::class`]) that the CLI prints on failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("session `{0}` already exists")]
    DuplicateSession(String),
    #[error("storage error at {path}: {detail}")]
    Storage { path: PathBuf, detail: String },
    #[error("frame index {got} appended, expected {expected}")]
    OutOfOrderFrame { expected: usize, got: usize },
    #[error("resolution mismatch: expected {expected:?}, got {got:?}")]
    ResolutionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("session is finalized and accepts no further writes")]
    SessionClosed,
    #[error("seed ({x}, {y}) outside {width}x{height} frame")]
    SeedOutOfBounds {
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },
    #[error("seed references frame {frame} but session has {frame_count} frames")]
    SeedFrameMissing { frame: usize, frame_count: usize },
    #[error("session has no frames")]
    EmptySession,
    #[error("session has no seed prompt")]
    MissingSeed,
    #[error("corrupt session at {path}: {detail}")]
    CorruptSession { path: PathBuf, detail: String },
    #[error("session at {0} is not finalized")]
    NotFinalized(PathBuf),
    #[error("video export failed: {0}")]
    Export(String),
    #[error("proposal list is empty")]
    NoProposal,
    #[error("tracker initialization failed: {0}")]
    InitializationFailure(String),
    #[error("reseed failed: {0}")]
    ReseedFailure(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend protocol error: {0}")]
    Backend(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scene spec: {0}")]
    SceneSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn storage(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::Storage {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::CorruptSession {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    /// Stable, machine-parsable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DuplicateSession(_) => "DuplicateSession",
            Error::Storage { .. } => "StorageError",
            Error::OutOfOrderFrame { .. } => "OutOfOrderFrame",
            Error::ResolutionMismatch { .. } => "ResolutionMismatch",
            Error::SessionClosed => "SessionClosed",
            Error::SeedOutOfBounds { .. } => "SeedOutOfBounds",
            Error::SeedFrameMissing { .. } => "SeedFrameMissing",
            Error::EmptySession => "EmptySession",
            Error::MissingSeed => "MissingSeed",
            Error::CorruptSession { .. } => "CorruptSession",
            Error::NotFinalized(_) => "NotFinalized",
            Error::Export(_) => "ExportError",
            Error::NoProposal => "NoProposal",
            Error::InitializationFailure(_) => "InitializationFailure",
            Error::ReseedFailure(_) => "ReseedFailure",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::Backend(_) => "BackendError",
            Error::UnknownBackend(_) => "UnknownBackend",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::SceneSpec(_) => "SpecError",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}
