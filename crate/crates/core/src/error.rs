use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the toolkit.
///
/// Variants split into two families: input validation (bad parameters,
/// malformed files) and numerical failure (non-convergence, loss of
/// positivity). [`Error::is_validation`] tells them apart; the CLI maps
/// them to exit codes 2 and 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("maps {first} and {second} have overlapping images on the hull ({detail})")]
    Overlap {
        first: usize,
        second: usize,
        detail: String,
    },

    #[error("atom budget exceeded: {requested} atoms requested, budget is {budget}; reduce n or J")]
    AtomBudget { requested: usize, budget: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("off-diagonal coefficient b_{index} lost positivity ({value:e})")]
    LostPositivity { index: usize, value: f64 },

    #[error("torus atom at gap {gap} is negative ({value:e}); branch-sign bookkeeping is inconsistent")]
    NegativeAtom { gap: usize, value: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ill-conditioned harmonic system (condition estimate {estimate:.2e}); use a longer window or a smaller lattice radius")]
    IllConditioned { estimate: f64 },

    #[error("stabilization not reached: {0}")]
    NotStabilized(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Overlap { .. }
                | Error::AtomBudget { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
