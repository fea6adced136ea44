use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("invalid convex body: {0}")]
    InvalidBody(String),

    #[error("insufficient Monte Carlo budget: {0}")]
    InsufficientBudget(String),

    #[error("point outside the functional's window: {0}")]
    Domain(String),

    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("cannot classify regime: {0}")]
    AmbiguousRegime(String),

    #[error("degenerate model: {0}")]
    DegenerateSpec(String),

    #[error("matrix is singular: {0}")]
    SingularMatrix(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("moment condition violated: {0}")]
    MomentCondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("log-domain error: {0}")]
    LogDomain(String),

    #[error("rejection sampling gave up after {attempts} consecutive rejections")]
    RejectionCap { attempts: u64 },

    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from invalid input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::InvalidDimension(_)
                | Error::InvalidBody(_)
                | Error::InvalidExponents(_)
                | Error::InvalidParameter(_)
                | Error::MomentCondition(_)
                | Error::AmbiguousRegime(_)
                | Error::DegenerateSpec(_)
                | Error::Json(_)
        )
    }
}
