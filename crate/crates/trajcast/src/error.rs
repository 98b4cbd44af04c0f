//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible for an operation.
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An out-of-range or inconsistent parameter value.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A call that violates an API contract (e.g. backward on a non-scalar).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input data.
    #[error("data error: {0}")]
    Data(String),

    /// A parse failure at a specific line of a text input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Configuration file or override problem.
    #[error("config error: {0}")]
    Config(String),

    /// Scene exceeds the agent capacity the model was built with.
    #[error("scene has {n} agents but the checkpoint supports at most {n_max}")]
    Capacity { n: usize, n_max: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
