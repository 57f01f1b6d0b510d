use thiserror::Error;

/// Errors raised by the solver kernels and file layers.
#[derive(Debug, Error)]
pub enum FyError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A spectrum required to lie in the Γ₂ cone does not.
    #[error("spectrum outside the admissible cone (margin {margin:e})")]
    Cone { margin: f64 },

    /// The right-hand side w² of the Hessian form is not positive.
    #[error("degenerate equation: w^2 = {value:e} at grid point {point}")]
    Degenerate { value: f64, point: usize },

    /// An iterative solve or line search made no acceptable progress.
    #[error("stagnation: {0}")]
    Stagnation(String),

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FyError>;
