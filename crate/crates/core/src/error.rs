//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by calibrator construction, training, evaluation, and I/O.
#[derive(Debug, Error)]
pub enum McnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("score {score} out of calibration range [{lo}, {hi})")]
    ScoreOutOfRange { score: f64, lo: f64, hi: f64 },

    #[error("unknown field id {field} (declared field count {count})")]
    UnknownField { field: usize, count: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, McnError>;
