use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncation error: degree {degree} exceeds level {level}")]
    Truncation { degree: usize, level: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
