use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatteError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at iteration {iter}: loss = {loss}")]
    Divergence { iter: usize, loss: f64 },

    #[error("image codec error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MatteError {
    /// Process exit status: 2 for configuration and parameter errors, 3 for
    /// data, IO and checkpoint errors, 4 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Param(_) => 2,
            Self::Divergence { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, MatteError>;

pub(crate) fn shape_err<T>(what: impl Into<String>) -> Result<T> {
    Err(MatteError::Shape(what.into()))
}
