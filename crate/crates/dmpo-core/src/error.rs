//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by environment construction, training, and data generation.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed structurally inconsistent inputs (dimension mismatch,
    /// unknown environment name, frozen/unfrozen policy in the wrong role).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric precondition failed (probability out of range, non-stochastic
    /// row, invalid discount factor, index out of range).
    #[error("validation error: {0}")]
    Validation(String),

    /// An update was requested on a frozen policy.
    #[error("update refused: {0}")]
    UpdateRefused(String),

    /// An occupancy ratio was requested outside the reference support.
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    /// Rejection sampling could not produce enough accepted trajectories.
    #[error("generation exhausted: {0}")]
    GenerationExhausted(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
