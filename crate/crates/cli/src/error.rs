use std::fmt;

/// Failure of one CLI invocation: a stable class name plus detail.
#[derive(Debug)]
pub struct CliError {
    pub class: &'static str,
    pub detail: String,
}

/// Exit status per error class. Unlisted classes exit with 1; argument
/// errors exit with 2 (reported by the argument parser).
pub const EXIT_CODES: &[(&str, i32)] = &[
    ("DuplicateSession", 10),
    ("StorageError", 11),
    ("OutOfOrderFrame", 12),
    ("ResolutionMismatch", 13),
    ("SessionClosed", 14),
    ("SeedOutOfBounds", 15),
    ("SeedFrameMissing", 16),
    ("EmptySession", 17),
    ("MissingSeed", 18),
    ("CorruptSession", 19),
    ("NotFinalized", 20),
    ("ExportError", 21),
    ("NoProposal", 22),
    ("InitializationFailure", 23),
    ("ReseedFailure", 24),
    ("BackendUnavailable", 25),
    ("BackendError", 26),
    ("UnknownBackend", 27),
    ("InvalidConfig", 28),
    ("SpecError", 29),
    ("InvalidInput", 30),
    ("NetworkError", 31),
    ("FramingError", 32),
    ("ProtocolError", 33),
    ("IoError", 34),
];

impl CliError {
    pub fn new(class: &'static str, detail: impl Into<String>) -> Self {
        CliError {
            class,
            detail: detail.into(),
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Self::new("InvalidInput", detail)
    }

    pub fn exit_code(&self) -> i32 {
        EXIT_CODES
            .iter()
            .find(|(c, _)| *c == self.class)
            .map_or(1, |(_, code)| *code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one line, whatever the detail contains
        let detail = self.detail.replace(['\n', '\r'], " ");
        write!(f, "error: {}: {}", self.class, detail)
    }
}

impl From<seedtrack_core::Error> for CliError {
    fn from(e: seedtrack_core::Error) -> Self {
        CliError::new(e.class(), e.to_string())
    }
}

impl From<seedtrack_capture::CaptureError> for CliError {
    fn from(e: seedtrack_capture::CaptureError) -> Self {
        CliError::new(e.class(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("IoError", e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
