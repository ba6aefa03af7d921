use thiserror::Error;

/// Errors raised by the exact and Monte Carlo operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("enumeration needs {needed} sites, cap is {cap}")]
    CapExceeded { needed: usize, cap: usize },
    #[error("support mismatch: {0}")]
    Support(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("empty sector: {0}")]
    EmptySector(String),
    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    Solver { residual: f64, iterations: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
