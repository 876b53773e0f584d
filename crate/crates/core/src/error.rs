use thiserror::Error;

use crate::lattice::Site;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("site ({}, {}) is outside the region", .0[0], .0[1])]
    OutOfRegion(Site),
    #[error("boundary condition does not specify site ({}, {})", .0[0], .0[1])]
    MissingBoundary(Site),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid update family: {0}")]
    InvalidFamily(String),
    #[error("unknown catalog family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state space too large: {0}")]
    TooLarge(String),
    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },
    #[error("censored data: {0}")]
    Censored(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
