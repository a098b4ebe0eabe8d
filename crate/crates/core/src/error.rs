use thiserror::Error;

use crate::model::BlockVector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid sparsity pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An exact enumeration or dense materialization would exceed its cap.
    #[error("{what}: {required} exceeds the cap of {cap}; use a Monte-Carlo estimate or raise the cap")]
    CapExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    /// The solver produced a non-finite iterate. `last_finite` is the last
    /// iterate that was entirely finite.
    #[error("solver diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        last_finite: Box<BlockVector>,
    },
}
