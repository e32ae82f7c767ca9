use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, shape or hyperparameter configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Input outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed binary or text container.
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite value produced by a pipeline stage.
    #[error("non-finite value in stage `{stage}`")]
    NonFinite { stage: String },

    #[error("training diverged at step {step}: loss is {loss}")]
    TrainingNaN { step: usize, loss: f64 },

    #[error("undefined metric: {0}")]
    Metric(String),

    #[error("gradient check failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for the command-line tool: 2 for input and
    /// configuration problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::TrainingNaN { .. } | Error::Verification(_) => 3,
            _ => 2,
        }
    }
}
