//! Error type shared across the engine.

use std::path::PathBuf;
use thiserror::Error;

/// All failures the engine can report.
///
/// Variants are grouped so callers (notably the CLI) can map them to
/// coarse categories: input/data problems versus numeric or model-shape
/// problems.
#[derive(Debug, Error)]
pub enum SnnError {
    /// Shape or size mismatch between cooperating values.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter violated its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data is missing, malformed, or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// A file format violation (checkpoints, spike fields, guidance bundles).
    #[error("format error: {0}")]
    Format(String),

    /// Config file rejection, with the 1-based line number.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// Numeric failure during training or evaluation (non-finite values).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Underlying I/O failure, tagged with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SnnError {
    /// Wrap an `std::io::Error` with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SnnError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad or missing input data rather than by
    /// model state or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            SnnError::Data(_) | SnnError::Format(_) | SnnError::Config { .. } | SnnError::Io { .. }
        )
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SnnError>;
