use thiserror::Error;

/// Errors produced by geometry, solver and statistics operations.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("pullback metric rank deficient (min singular value {sigma_min:.3e} <= {tol:.1e})")]
    RankDeficient { sigma_min: f64, tol: f64 },

    #[error("spec error at `{path}`: {message}")]
    Spec { path: String, message: String },
}

impl GeometryError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        GeometryError::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        GeometryError::Numerical(msg.into())
    }

    pub fn spec(path: impl Into<String>, message: impl Into<String>) -> Self {
        GeometryError::Spec {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GeometryError>;
