use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("element weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("discrete samplers require unit element weights, got {0}")]
    NonUnitWeight(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate threshold: phi_1 = 0")]
    DegenerateThreshold,
    #[error("frequency function has no derivative rule; only exact integer counts are supported")]
    NoDerivative,
    #[error("cannot merge summaries: {0}")]
    MergeMismatch(String),
    #[error("inclusion probability is zero for a key with nonzero contribution (weight {0})")]
    ZeroInclusion(f64),
    #[error("cap parameter set is empty")]
    EmptyCapSet,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
