use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid initial configuration: {0}")]
    InvalidInit(String),
    #[error("no main equilibrium state exists for rho = {rho} <= h = {h}")]
    NoEquilibrium { rho: f64, h: f64 },
    #[error("perturbation needs at least one particle and one hole")]
    CannotPerturb,
    #[error("malformed sequence: {0}")]
    MalformedSequence(String),
    #[error("empty accumulation window")]
    EmptyWindow,
    #[error("{what} did not converge within {steps} steps")]
    NonConvergence { what: &'static str, steps: usize },
    #[error("operation not supported for variant {0}")]
    UnsupportedVariant(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
