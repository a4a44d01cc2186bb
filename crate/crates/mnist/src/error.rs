use thiserror::Error;

use crate::idx::IdxError;

#[derive(Debug, Error)]
pub enum MnistError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error(transparent)]
    Core(#[from] gentune_core::Error),
}
