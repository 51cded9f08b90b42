use thiserror::Error;

/// Errors raised across the sensing, detection, theory and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(
        "matrix is numerically rank deficient: smallest singular value {smallest_singular:e}, \
         condition number {condition:e}"
    )]
    RankDeficient {
        smallest_singular: f64,
        condition: f64,
    },

    #[error("row Gram matrix is ill-conditioned: condition number {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("support set is empty")]
    EmptySupport,

    #[error("support index {index} out of range for dimension {dim}")]
    SupportOutOfRange { index: usize, dim: usize },

    #[error("unknown {kind} `{name}` (registered: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("non-finite log-likelihood increment {0}")]
    NonFiniteIncrement(f64),

    #[error("{0} is undefined for this run")]
    Undefined(&'static str),

    #[error("compression cannot reduce delay below uncompressed: target ratio r0 = {0} must exceed 1")]
    RatioTarget(f64),

    #[error("censored fraction {fraction} exceeds the limit {limit}; run is invalid")]
    CensoringBreach { fraction: f64, limit: f64 },

    #[error("storage: {0}")]
    Storage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in (0, 1)",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}
