use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("quadrature for {what} did not converge (residual estimate {residual:e})")]
    Numeric { what: &'static str, residual: f64 },

    #[error("outside the domain where the bound is asserted: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empirical characteristic function too small at theta={theta} (|phi|={magnitude:.4}); estimator unstable")]
    Grid { theta: f64, magnitude: f64 },

    #[error("estimated {estimated} draws exceed the budget of {budget}")]
    Budget { estimated: u128, budget: u128 },

    #[error("degenerate law: {0}")]
    Degenerate(String),

    #[error("orbit leaves the constructed tower; uncovered measure {uncovered:.6}")]
    Coverage { uncovered: f64 },
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
