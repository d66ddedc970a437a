use thiserror::Error;

/// Errors produced by the model generators, solvers and checkers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// `I - A` (or `I - A(0)`) is singular or too badly conditioned to invert.
    #[error("singular model: I - A has condition number {condition:.3e}")]
    SingularModel { condition: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("covariance is not positive definite at slot {slot}")]
    NotPositiveDefinite { slot: usize },

    #[error("combinatorial budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("no sparse row is consistent with the observations of node {row}")]
    InconsistentData { row: usize },

    /// Two different sparse rows explain the observations of the same node.
    #[error("row {row} is not identifiable: at least two sparse rows fit the observations")]
    NonIdentifiable {
        row: usize,
        first: Vec<f64>,
        second: Vec<f64>,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularModel { .. } | Error::Numeric(_) | Error::NotPositiveDefinite { .. }
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
