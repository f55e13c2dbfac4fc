use thiserror::Error;

/// Errors raised by model construction and the estimators built on top of it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested enumeration or relaxation would exceed a configured cap.
    #[error("size limit exceeded: {what} needs {needed}, cap is {cap}")]
    SizeLimit { what: &'static str, needed: u128, cap: u128 },

    #[error("level too small: need level >= {needed}, have {level}")]
    LevelTooSmall { needed: usize, level: usize },

    #[error("scope mismatch: {0}")]
    ScopeMismatch(String),

    /// A state that well-formed input cannot reach (e.g. an infeasible SA polytope).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
