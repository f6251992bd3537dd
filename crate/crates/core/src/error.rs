use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value in layer {layer}: {what}")]
    Numeric { layer: usize, what: String },

    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("image decode error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("compound synthesis failed: {0}")]
    Synthesis(String),

    #[error("insufficient pool: need {needed} samples, have {available}")]
    InsufficientPool { needed: usize, available: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
