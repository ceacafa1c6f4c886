use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {what} (residual {residual:e})")]
    NumericalFailure { what: String, residual: f64 },

    /// An eigenvector is (numerically) self-orthogonal, so c-normalization
    /// and every quantity built on it is undefined.
    #[error("defective eigensystem at E = {energy}: {detail}")]
    Defective { energy: f64, detail: String },

    #[error("energy {energy} sits on the lead threshold {threshold}")]
    LeadThreshold { energy: f64, threshold: f64 },

    #[error("no propagating channel at E = {energy}")]
    NoChannel { energy: f64 },

    #[error("singular linear system at E = {energy}")]
    Singular { energy: f64 },

    #[error("no branch point in range (smallest gap {min_gap:e})")]
    NotFound { min_gap: f64 },

    #[error("insufficient data: {valid} valid rows, need {required}")]
    InsufficientData { valid: usize, required: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
