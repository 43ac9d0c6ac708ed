use std::fmt;
use std::path::Path;

use tarjama_core::CorpusError;
use tarjama_queue::{BackendError, QueueError};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, invalid records or failed checks.
    Validation,
    /// Unreadable or unwritable files and broken configuration.
    Io,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn io_at(path: &Path, err: impl fmt::Display) -> Self {
        Self::io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Io => EXIT_IO,
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) => Self::io(e.to_string()),
            other => Self::validation(other.to_string()),
        }
    }
}

impl From<QueueError> for CliError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::Io { .. } | QueueError::Corrupt { .. } => Self::io(e.to_string()),
            other => Self::validation(other.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) | BackendError::MissingApiKey(_) => Self::io(e.to_string()),
            other => Self::validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Maps any displayable error to a validation error.
pub fn invalid(e: impl fmt::Display) -> CliError {
    CliError::validation(e.to_string())
}
