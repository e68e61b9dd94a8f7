use thiserror::Error;

use dds_core::DdsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing upstream artifact: {0}")]
    Missing(String),
    #[error("stale upstream artifact: {0} (rerun the named stage or pass --allow-stale)")]
    Stale(String),
    #[error(transparent)]
    Core(#[from] DdsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(DdsError::InvalidInput(_)) => 2,
            CliError::Missing(_) | CliError::Stale(_) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}
