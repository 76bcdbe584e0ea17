use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("integration step too large: trace drifted by {drift:e}; reduce dt")]
    StepTooLarge { drift: f64 },

    #[error("variance along the requested axis vanishes")]
    ZeroVariance,

    #[error("ill-conditioned fit: {0}")]
    IllConditionedFit(String),

    #[error("signal response of the reference coherent state vanishes for this readout axis")]
    VanishingResponse,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
