use std::io;

use thiserror::Error;

/// Errors produced anywhere in the microstate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("parse error in row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("value error: {0}")]
    Value(String),

    #[error("calibration error in signal {signal}: digital_min == digital_max ({value})")]
    Calibration { signal: String, value: i64 },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("channel lookup failed: {0} not present in recording")]
    Lookup(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("index {index} out of bounds for length {len}")]
    Bounds { index: usize, len: usize },

    #[error("contract error: {0}")]
    Contract(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("token {token} out of range for k = {k}")]
    Range { token: u32, k: usize },

    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True when the error comes from malformed inputs or bad parameters
    /// rather than data that violates a pipeline contract.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Parse { .. }
                | Error::Row { .. }
                | Error::Value(_)
                | Error::Calibration { .. }
                | Error::Truncated { .. }
                | Error::Format(_)
                | Error::Parameter(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
