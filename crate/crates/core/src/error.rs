use thiserror::Error;

use crate::optimizer::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition of an operation was not met by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A retraction step produced a point outside the manifold.
    #[error("degenerate step: {0}")]
    DegenerateStep(String),

    /// Points outside the domain of a map (e.g. antipodal points for the sphere logarithm).
    #[error("domain error: {0}")]
    Domain(String),

    /// A point lies outside the retractive neighbourhood where the inverse retraction exists.
    #[error("outside retractive neighbourhood: {0}")]
    OutsideNeighbourhood(String),

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    /// An optimizer run stopped at epoch `s`, inner step `t`. The trace holds
    /// every record completed before the failure.
    #[error("run aborted at (s={s}, t={t}): {reason}")]
    Aborted {
        s: usize,
        t: usize,
        reason: String,
        trace: Box<RunTrace>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
