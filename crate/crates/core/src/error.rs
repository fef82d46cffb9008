use thiserror::Error;

/// Errors raised by samplers, solvers and table builders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} is outside the utility range [0, {sup})")]
    OutOfRange { value: f64, sup: f64 },

    #[error("contraction constant {rho} is not below 1; refusing to iterate")]
    NotContracting { rho: f64 },

    #[error("numerical routine did not converge: {0}")]
    Convergence(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("prime table cache is corrupt: {0}")]
    CorruptCache(String),

    #[error("unknown claim `{0}`")]
    UnknownClaim(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
