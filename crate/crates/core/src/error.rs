use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the completion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural invariant (asymmetric adjacency,
    /// negative weight, non-binary mask, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-supplied argument is out of its admissible range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Matrix shapes do not conform for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numerical routine failed (eigensolver non-convergence, overflow).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The optimizer produced a non-finite objective.
    #[error("objective became non-finite at iteration {iteration} (learning rate {learning_rate:e}, value {value})")]
    Diverged {
        iteration: usize,
        learning_rate: f64,
        value: f64,
    },

    /// A text input could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
