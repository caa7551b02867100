use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvError {
    #[error("domain error at index {index}: {reason}")]
    Domain { index: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numerical error during {stage}")]
    Numerical { stage: &'static str },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("validation error at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("training diverged at step {step}: non-finite loss")]
    TrainingDivergence { step: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl BvError {
    pub fn usage(msg: impl Into<String>) -> Self {
        BvError::Usage(msg.into())
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        BvError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for BvError {
    fn from(e: std::io::Error) -> Self {
        BvError::Io(e.to_string())
    }
}

pub type Result<T, E = BvError> = std::result::Result<T, E>;
