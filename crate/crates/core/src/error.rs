use thiserror::Error;

/// Errors raised by the integrators and their supporting kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is empty ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not Hermitian: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian { defect: f64, tolerance: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },
    #[error("negative flow offset {0}")]
    NegativeOffset(f64),
    #[error("negative scale {0}")]
    NegativeScale(f64),
    #[error("inconsistent tableau: {0}")]
    InconsistentTableau(String),
    #[error("tableau '{name}' is not CP-valid: {reason}")]
    NotCpValid { name: String, reason: String },
    #[error("trace {0:.6e} is not positive, cannot renormalize")]
    NonPositiveTrace(f64),
    #[error("truncation input is identically zero")]
    ZeroFactor,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
