use std::io;
use std::path::Path;

use fade_core::diffusion::DiffusionError;
use fade_core::format::IngestError;
use fade_core::lm::LmError;
use fade_core::{DivergenceError, KsError};
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const METRIC: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input files, flags or configuration.
    #[error("{0}")]
    Validation(String),
    /// Well-formed inputs on which a metric is undefined.
    #[error("{0}")]
    Metric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Metric(_) => exit::METRIC,
            CliError::Io(_) => exit::IO,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// Attach the offending file to an ingest failure.
    pub fn ingest(path: &Path, e: IngestError) -> Self {
        let msg = format!("{}: {e}", path.display());
        match e {
            IngestError::Io(_) => CliError::Io(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<DivergenceError> for CliError {
    fn from(e: DivergenceError) -> Self {
        CliError::Metric(e.to_string())
    }
}

impl From<KsError> for CliError {
    fn from(e: KsError) -> Self {
        CliError::Metric(e.to_string())
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        CliError::Metric(e.to_string())
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::UnknownToken { .. }
            | LmError::MissingEos
            | LmError::InvalidItem { .. }
            | LmError::InvalidModel(_) => CliError::Validation(e.to_string()),
            _ => CliError::Metric(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
