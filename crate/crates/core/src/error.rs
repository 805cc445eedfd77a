use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid of {m} points per direction cannot resolve truncation {n} (need at least {required})")]
    Resolution { m: usize, n: usize, required: usize },

    #[error("nodal values violate the {sector} symmetry by {asymmetry:.3e}")]
    SectorMismatch { sector: &'static str, asymmetry: f64 },

    #[error("incompatible fields: {0}")]
    Incompatible(String),

    #[error("non-finite value encountered in {0}")]
    NumericRange(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expansion order {order} is not available for p = {p}")]
    UnsupportedOrder { p: u32, order: u32 },

    #[error("newton did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("bordered jacobian is singular at a = {a}")]
    ContinuationBreakdown { a: f64 },

    #[error("derivative along the branch unavailable: {0}")]
    DerivativeUnavailable(String),

    #[error("operator is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },

    #[error("right-hand side has kernel component {projection:.3e} above tolerance {tolerance:.3e}")]
    Solvability { projection: f64, tolerance: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schema violation in {context}: {message}")]
    Schema { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
