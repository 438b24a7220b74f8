//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty reduction")]
    EmptyReduction,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target {target} out of range for vocab {vocab}")]
    TargetOutOfRange { target: i64, vocab: usize },

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
