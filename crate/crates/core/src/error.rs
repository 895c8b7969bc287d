use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("unphysical state: {0}")]
    InvalidState(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("optimization failed: {0}")]
    OptimizationFailure(String),
    #[error("no secure range: {0}")]
    NoRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
