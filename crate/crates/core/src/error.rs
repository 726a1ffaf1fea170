use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an invalid argument (bad index, unknown shape, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// The Krylov solve did not reach the requested relative residual.
    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    SolverDivergence { iterations: usize, residual: f64 },

    /// The tracked interface disappeared (no sign change left in the level set).
    #[error("interface vanished: {0}")]
    InterfaceVanished(String),

    /// Non-finite values, CFL violations and other numerical breakdowns.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An internal consistency check failed.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverDivergence { .. }
                | Error::InterfaceVanished(_)
                | Error::Numerical(_)
                | Error::Invariant(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
