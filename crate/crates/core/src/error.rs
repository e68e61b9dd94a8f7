use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DdsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DdsError::InvalidInput(msg.into()))
}
