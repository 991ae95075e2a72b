use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the mathematical domain of an operation
    /// (non-finite time, zero-mass distribution, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Caller supplied inconsistent or invalid arguments.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Input data violates a structural expectation (unsorted stream,
    /// more clicks than trials, malformed file).
    #[error("data error: {0}")]
    Data(String),
    /// A fit did not converge. Carries the best parameters seen so far.
    #[error("fit failed: {message} (best cost {best_cost:.6e})")]
    Fit {
        message: String,
        best_params: Vec<f64>,
        best_cost: f64,
    },
    /// Two adjacent curves never cross between their peaks.
    #[error("degenerate curves: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
