use thiserror::Error;

use crate::projections::ScalingResult;

pub type Result<T, E = OtError> = std::result::Result<T, E>;

/// Error taxonomy shared by every module of the crate.
#[derive(Debug, Error)]
pub enum OtError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("inner marginal entry {index} = {value:e} is below the positivity floor")]
    DegenerateMarginal { index: usize, value: f64 },

    #[error("kernel is not strictly positive: {0}")]
    NonPositiveKernel(String),

    /// A scaling loop ran out of iterations. `partial` is the best-effort
    /// output at the final iterate so callers may continue with it.
    #[error("scaling did not converge after {iters} iterations (residual {residual:e})")]
    NotConverged {
        residual: f64,
        iters: usize,
        partial: Box<ScalingResult>,
    },

    #[error("objective needs intra-domain costs A and B")]
    MissingIntraCost,

    #[error("objective needs a linear cost matrix C")]
    MissingLinearCost,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid rank {0}: need r >= 2")]
    InvalidRank(usize),

    #[error("closed-form g needs diag(Q^T C R) >= 0, found {value:e} at {index}")]
    NegativeOmega { index: usize, value: f64 },

    #[error("problem too large for this oracle: {0}")]
    TooLarge(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OtError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        OtError::ShapeMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OtError::InvalidArgument(msg.into())
    }
}
