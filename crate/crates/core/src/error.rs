//! Error type shared across the reconstruction library.

use thiserror::Error;

/// Errors produced by reconstruction, sampling, training and I/O routines.
#[derive(Debug, Error)]
pub enum ReconError {
    /// Array shapes or lengths are inconsistent with what an operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// A named parameter is outside its valid range.
    #[error("invalid parameter `{name}`: {msg}")]
    Parameter { name: String, msg: String },

    /// A requested k-space split would leave the loss or data-consistency set empty.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// Non-finite values were encountered where finite numerics are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Coil maps fail the sum-of-squares normalization contract.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// A binary blob is malformed; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A run configuration is incomplete or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ReconError {
    pub fn shape(msg: impl Into<String>) -> Self {
        ReconError::Shape(msg.into())
    }

    pub fn parameter(name: impl Into<String>, msg: impl Into<String>) -> Self {
        ReconError::Parameter {
            name: name.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ReconError>;
