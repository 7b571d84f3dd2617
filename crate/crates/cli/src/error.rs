//! Failure categories and their process exit codes.

use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid input: image, corpus, arguments.
    #[error("{0}")]
    Input(String),
    /// Detector descriptor unknown or backend could not be started.
    #[error("{0}")]
    Detector(String),
    #[error("{0}")]
    TargetIndex(String),
    /// Detector failed while the run was in progress.
    #[error("{0}")]
    Backend(String),
    /// Malformed manifest, config or annotation file.
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 3,
            CliError::Detector(_) => 4,
            CliError::TargetIndex(_) => 5,
            CliError::Backend(_) => 6,
            CliError::Parse(_) => 7,
            CliError::Output(_) => 8,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Output(format!("cannot write {}: {e}", path.display()))
    }
}

/// Errors raised while the detector is being driven.
impl From<dclose::Error> for CliError {
    fn from(e: dclose::Error) -> Self {
        use dclose::Error as E;
        match e {
            E::Backend(_) | E::BatchItem { .. } | E::Protocol(_) => CliError::Backend(e.to_string()),
            E::Io(_) => CliError::Backend(e.to_string()),
            E::Format(_) | E::Json(_) => CliError::Parse(e.to_string()),
            E::InvalidInput(_) | E::DimensionMismatch { .. } | E::UndefinedMetric(_) => {
                CliError::Input(e.to_string())
            }
        }
    }
}
