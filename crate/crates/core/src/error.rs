use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("integration aborted at t = {t}: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("joint dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
