use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate smoother: tr(I - A) = {trace:e} at lambda = {lambda:e}")]
    DegenerateSmoother { lambda: f64, trace: f64 },

    #[error("training diverged at step {step}: loss = {loss} (last finite loss {last_finite:?})")]
    Divergence {
        step: usize,
        loss: f64,
        last_finite: Option<f64>,
    },

    #[error("criterion evaluation failed on draw {index}: {source}")]
    DrawFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
