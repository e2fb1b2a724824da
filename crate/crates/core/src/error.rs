use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("velocity {0} outside the open interval (-1, 1)")]
    VelocityOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Decompose(#[from] DecomposeError),

    #[error("blow-up at step {step} (t = {t}): {what}")]
    BlowUp { step: usize, t: f64, what: String },

    #[error("domain too small at t = {t}: boundary deviation {deviation:.3e}")]
    UndersizedDomain { t: f64, deviation: f64 },

    #[error("run failed at t = {t}: {source}")]
    RunFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

/// Failure modes of the Newton solve for the orthogonality conditions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("Jacobian numerically singular (condition estimate {cond:.3e})")]
    SingularJacobian { cond: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The iterate left the admissible parameter window; this is the exit-time event.
    #[error("iterate left the parameter window: u = {u}, bound {bound}")]
    LeftWindow { u: f64, bound: f64 },
}
