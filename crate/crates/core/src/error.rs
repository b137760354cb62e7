use thiserror::Error;

/// Errors raised by the library surface.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The operation is not available for this configuration.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Too few samples to fit or compare.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A check was configured with inputs that violate its hypothesis.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The time integrator had to stop.
    #[error("solver aborted: {0}")]
    SolverAbort(String),
}

pub type Result<T> = std::result::Result<T, Error>;
