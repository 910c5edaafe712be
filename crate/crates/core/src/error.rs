use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AdiosError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AdiosError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AdiosError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Configuration and usage problems map to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Json(_))
    }
}
