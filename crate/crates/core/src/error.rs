//! Error type shared by the whole toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point index {0} out of range (space has {1} points)")]
    InvalidIndex(usize, usize),

    #[error("empty space")]
    EmptySpace,

    #[error("metric axiom violated: {0}")]
    MetricViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel singular at distinct points {0} and {1}")]
    SingularKernel(usize, usize),

    #[error("cube {0} is degenerate for the given function: {1}")]
    DegenerateCube(usize, String),

    #[error("accretivity too degenerate on cube {0}: condition number {1:.3e}")]
    DegenerateAccretivity(usize, f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("missing per-cube function for top cube {0}")]
    MissingTopFunction(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
