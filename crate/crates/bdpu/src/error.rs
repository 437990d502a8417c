use thiserror::Error;

use crate::partition::Move;

/// Errors produced by chain construction, law evaluation, and the checkers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A move was applied to a state that has no block of the required size.
    #[error("inadmissible move {0:?}: no block of the required size")]
    InadmissibleMove(Move),

    /// A state occupies a block size beyond the finite chain's capacity.
    #[error("state has a block of size {size}, beyond capacity {max_size}")]
    StateExceedsCapacity { size: u64, max_size: u64 },

    /// The requested law exists only in the subcritical regime.
    #[error("operation requires beta < 1/2, got beta = {0}")]
    Regime(f64),

    /// A parameter failed validation.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The tridiagonal solve hit a vanishing pivot.
    #[error("singular tridiagonal system (beta = {beta}, size = {size})")]
    SingularSystem { beta: f64, size: u64 },

    /// A goodness-of-fit test had too little data after cell merging.
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    /// A serialized partition or config value could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
