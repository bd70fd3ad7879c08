//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the certification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative numerical routine failed to converge or produced a
    /// non-finite result.
    #[error("numerical error: {0}")]
    NumericalError(String),

    /// A file did not match its declared binary format.
    #[error("format error: {0}")]
    FormatError(String),

    /// The certified radius is unbounded (p1 = 1, p2 = 0). Callers decide
    /// how to report it; it never flows through the normal radius path.
    #[error("infinite certified radius: p1 = 1 and p2 = 0")]
    InfiniteRadius,

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    /// A base-classifier evaluation failed during Monte Carlo sampling.
    #[error("classifier evaluation failed at sample {sample_index}: {source}")]
    Classifier {
        sample_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalError(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::FormatError(msg.into())
    }
}
