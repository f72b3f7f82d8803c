use thiserror::Error;

/// Errors produced by calibration, scoring and experiment code.
#[derive(Debug, Error)]
pub enum Error {
    /// A numerical routine received arguments outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine hit its iteration cap.
    #[error("{routine} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        routine: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Caller supplied an invalid argument.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The calibration set is too small to certify the requested coverage.
    #[error(
        "calibration infeasible: n={n} cannot certify coverage {coverage} at delta={delta}; \
         need n >= {min_n}"
    )]
    Infeasible {
        epsilon: f64,
        delta: f64,
        n: usize,
        min_n: usize,
        coverage: f64,
    },

    /// Input data violates a structural invariant (e.g. a malformed truth tree).
    #[error("data error: {0}")]
    Data(String),

    /// An operation is not available for the configured scorer kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The language-model endpoint could not be reached.
    #[error("transport error: {0}")]
    Transport(String),

    /// The endpoint answered with something other than the expected shape.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// No label token appeared among the reported log-probabilities.
    #[error("degenerate response: none of the five label tokens carried probability")]
    DegenerateResponse,

    /// Operating-point matching could not reach the requested success level.
    #[error("no operating point reaches success {target:.4} (best {best:.4} at epsilon {best_epsilon:.4})")]
    NoMatch {
        target: f64,
        best: f64,
        best_epsilon: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
