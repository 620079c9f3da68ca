use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Shapes or graph structure are inconsistent (e.g. reducible chain,
    /// non-contiguous replenish set).
    #[error("structural error: {0}")]
    Structure(String),

    /// A routine was called outside the parameter domain it handles.
    #[error("domain error: {0}")]
    Domain(String),

    /// The smooth-pasting or root equation has no solution in (0, 1).
    #[error("no interior threshold: {0}")]
    NoInteriorThreshold(String),

    /// Pseudo-time marching produced a non-finite value.
    #[error("pseudo-time marching diverged at t = {time:.6} (dt = {dt:e}, CFL bound {cfl_bound:e})")]
    Instability { time: f64, dt: f64, cfl_bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
