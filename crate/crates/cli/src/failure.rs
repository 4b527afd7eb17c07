use std::fmt;

use hcmt_core::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NON_FINITE: u8 = 4;

/// A failed command: the process exit code and the message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_OTHER,
            message: message.into(),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Checkpoint(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Ingest { .. } | Error::Alignment(_) | Error::Io { .. } => EXIT_DATA,
        Error::NonFinite { .. } => EXIT_NON_FINITE,
        _ => EXIT_OTHER,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Wraps a filesystem error on an output path.
pub fn write_err(path: &std::path::Path, e: impl fmt::Display) -> Failure {
    Failure::other(format!("cannot write {}: {e}", path.display()))
}

pub type CliResult<T> = std::result::Result<T, Failure>;
