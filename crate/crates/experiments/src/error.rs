use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config error: {0}")]
    Config(String),

    /// Missing or corrupt input data.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] gentune_core::Error),

    #[error(transparent)]
    Mnist(#[from] gentune_mnist::MnistError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type ExpResult<T> = std::result::Result<T, ExpError>;

impl ExpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for data
    /// problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config(_) => 2,
            ExpError::Data(_) => 3,
            _ => 1,
        }
    }
}
