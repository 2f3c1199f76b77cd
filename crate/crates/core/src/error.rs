use thiserror::Error;

/// Errors raised by the numerical kernel when inputs violate a contract.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("belief grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("degenerate posterior: every candidate weight has zero likelihood")]
    DegeneratePosterior,

    #[error("defection observed at trust estimate 1, which the behavior model rules out")]
    DefectAtFullTrust,

    #[error("feedback history is empty")]
    EmptyHistory,

    #[error("invalid feedback history: {0}")]
    InvalidHistory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("incomplete mission log: {0}")]
    IncompleteLog(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}
