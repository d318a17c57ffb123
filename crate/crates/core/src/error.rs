use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical inconsistency: {0}")]
    Numerical(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid POVM: {0}")]
    InvalidPovm(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),
    #[error("signaling behavior: {0}")]
    Signaling(String),
    #[error("unknown functional '{0}'")]
    UnknownFunctional(String),
    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),
    #[error("no crossing: {0}")]
    NoCrossing(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("parse error: {0}")]
    Parse(String),
}
