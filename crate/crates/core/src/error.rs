//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("singular reciprocal: constant term not bounded away from zero (min |a0| = {0:.3e})")]
    SingularReciprocal(f64),
    #[error("divergent integral: term t^{i} (log t)^{j} is not integrable from 0")]
    DivergentIntegral { i: i32, j: u32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("order error: {0}")]
    Order(String),
    #[error("positivity error: {0}")]
    Positivity(String),
    #[error("representation error: {0}")]
    Representation(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("span error: samples cover {0:.2} decades, need at least 1.5")]
    Span(f64),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 numerical failure, 3 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Io(_) => 1,
            Error::Numerical(_) => 2,
            _ => 3,
        }
    }
}
