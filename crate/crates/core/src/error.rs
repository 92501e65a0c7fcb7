use thiserror::Error;

/// Errors produced by network loading, bound computation and certification.
#[derive(Debug, Error)]
pub enum CrownError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("method {method} does not support {activation} activations")]
    MethodActivation { method: String, activation: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-monotone margin observed during radius search: {0}")]
    NonMonotone(String),
}

pub type Result<T> = std::result::Result<T, CrownError>;
