//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by geometry construction, discretization and solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A curve or slit set is degenerate or self-intersecting.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A numeric parameter is out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A size guard was exceeded (for example the Cantor level cap).
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// Two quadrature points coincide, so a Cauchy-type sum is undefined.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// GMRES did not reach the requested tolerance.
    #[error("solver failure: {msg} (iterations {iterations}, residual {residual:.3e})")]
    SolverFailure {
        msg: String,
        iterations: usize,
        residual: f64,
    },

    /// A NaN or infinity appeared inside an iterative solve.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// The capacity integrand failed its realness check; the discretization
    /// is too coarse for the requested geometry.
    #[error("inconsistent solution: {0}; try a larger number of nodes n")]
    Inconsistency(String),

    /// The preimage iteration hit the iteration cap before meeting its
    /// tolerance. The last iterate is reported for diagnosis.
    #[error("preimage iteration did not converge: defect {defect:.3e} after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        defect: f64,
        state: Box<crate::slitmap::PreimageState>,
    },

    /// Preimage ellipses collided; retry with a smaller axis ratio.
    #[error("geometry collision: {0}; try a smaller axis ratio r")]
    GeometryCollision(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
