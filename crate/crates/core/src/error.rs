//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Unified error type for geometry, solver, training, and I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A curve or geometry failed validation (self-intersection, escape,
    /// overlap, or an unusable parameterization).
    #[error("invalid geometry: {0}")]
    GeometryInvalid(String),

    /// The request is well-formed but outside the supported regime
    /// (e.g. a solver asked for a configuration it does not model).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A linear system could not be solved to the required residual.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// A numeric computation produced a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A serialized artifact is malformed or fails its integrity check.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::GeometryInvalid(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
