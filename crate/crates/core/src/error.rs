use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64, trace: Vec<f64> },

    #[error("iteration diverged at step {iteration} (residual {residual:.3e})")]
    Diverged { iteration: usize, residual: f64 },

    #[error("ground state is degenerate (gap {gap:.3e}); Lehmann sum is ill-defined")]
    DegenerateGroundState { gap: f64 },

    #[error("reference overlap {0:.3e} is too small for cluster analysis")]
    VanishingReference(f64),

    #[error("lowest eigenvalue has imaginary part {0:.3e}")]
    ComplexEigenvalue(f64),

    #[error("linear system is singular at omega = {0}")]
    Singular(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
