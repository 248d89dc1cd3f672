use thiserror::Error;

/// Errors produced by the inversion machinery.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A linear or time-stepping solve could not be completed.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A matrix that must be symmetric positive-definite was not.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// Every importance weight vanished.
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// The approximated inverse Hessian has no positive spectrum left.
    #[error("degenerate inverse Hessian: {0}")]
    DegenerateHessian(String),

    /// A mixture component carries no membership mass.
    #[error("degenerate mixture component {0}")]
    DegenerateComponent(usize),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
