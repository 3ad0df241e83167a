use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A channel realization carries no usable signal path.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    /// A convex subproblem was assembled inconsistently.
    #[error("invalid problem construction: {0}")]
    Construction(String),
    /// An iterative solver failed to produce a usable point.
    #[error("solver failure: {0}")]
    Solver(String),
    /// A scenario or experiment configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
