use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A configuration value is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Internal state became inconsistent (e.g. an attempt to overwrite a label).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// The exploration tip faces the outside of the domain.
    #[error("path is stuck: {0}")]
    Stuck(String),

    /// A random walk exceeded its step budget without being absorbed.
    #[error("walk not absorbed after {steps} steps")]
    Runaway { steps: u64 },

    /// The linear solve failed or its residual exceeded tolerance.
    #[error("solver error: {0}")]
    Solver(String),

    /// A vertex could not be assigned to either side of a completed path.
    #[error("classification error: {0}")]
    Classification(String),

    /// The requested regime is not covered by the routine.
    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("size cap exceeded: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
