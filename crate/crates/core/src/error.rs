use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain of the operation. `field` names the
    /// offending parameter so front ends can report it verbatim.
    #[error("invalid {field}: {reason}")]
    Domain { field: &'static str, reason: String },

    /// The requested tree depth exceeds the configured work cap.
    #[error("budget exceeded: n = {n} exceeds the cap of {cap} for {operation}")]
    BudgetExceeded {
        operation: &'static str,
        n: u32,
        cap: u32,
    },

    /// `h(beta) = beta lambda'(beta) - lambda(beta) - log 2` stays negative
    /// up to the overflow guard, i.e. the critical point is at infinity.
    #[error("no finite critical inverse temperature (h stays negative up to beta = {searched_to:e})")]
    NoFiniteCriticalPoint { searched_to: f64 },

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: error estimate {error_estimate:e} > tolerance {tolerance:e} after {subdivisions} subdivisions")]
    QuadratureNonconvergence {
        error_estimate: f64,
        tolerance: f64,
        subdivisions: usize,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }
}
