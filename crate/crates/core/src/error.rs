use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a physical or numerical operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a state where it is not allowed.
    #[error("usage error: {0}")]
    Usage(String),

    /// Tensor or vector widths do not agree.
    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    Shape {
        what: String,
        expected: usize,
        actual: usize,
    },

    /// The demand profile has no samples left for the requested window.
    #[error("demand profile exhausted at step {step} (horizon {horizon}, length {len})")]
    EndOfData {
        step: usize,
        horizon: usize,
        len: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// A parameter file could not be decoded or does not belong to the scenario.
    #[error("parameter file {path}: {message}")]
    ParamFile { path: PathBuf, message: String },

    /// A loss, gradient or simulation value went non-finite.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration-class errors map to a distinct CLI exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Shape { .. } | Error::ParamFile { .. } | Error::Parse { .. }
        )
    }
}

pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {value}")))
    }
}
