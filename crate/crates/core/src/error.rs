use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Step-size control could not meet the tolerances above the minimum step.
    #[error("step failure at tau = {tau}: step size {step:e} below minimum")]
    StepFailure { tau: f64, step: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A series did not reach the requested accuracy. `value` is the partial sum.
    #[error("series truncated after {terms} terms (last term {last_term:e}), partial value {value:e}")]
    Truncation { value: f64, terms: usize, last_term: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: need {needed} non-empty bins, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("no root in bracket [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
