//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by tensor ops, data synthesis, training and I/O.
#[derive(Debug, Error)]
pub enum TapError {
    /// Incompatible tensor shapes, reported with both offenders.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Invalid configuration value; `field` names the offender.
    #[error("invalid config: {field}: {message}")]
    Config { field: String, message: String },

    /// Misuse of the autodiff tape (backward on untracked graph, reuse, ...).
    #[error("autodiff usage error: {0}")]
    Tape(String),

    /// Non-finite values or other numeric failures.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Checkpoint/dataset corruption or format mismatch.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl TapError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        TapError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TapError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI contract: 2 config, 3 I/O, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            TapError::Config { .. } | TapError::Shape { .. } | TapError::Tape(_) => 2,
            TapError::Numeric(_) => 4,
            TapError::Io { .. } | TapError::Format { .. } | TapError::Json(_)
            | TapError::Image(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, TapError>;
