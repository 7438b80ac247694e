use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants split into two families that callers (the CLI in particular)
/// map to different exit statuses: input/validation problems, and numerical
/// or solver failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid obligor `{label}`: {reason}")]
    InvalidObligor { label: String, reason: String },

    #[error("scenario has {got} indicators but the portfolio has {expected} names")]
    ScenarioSize { expected: usize, got: usize },

    #[error("{n} names exceeds the exhaustive enumeration cutoff of {cutoff}; use Monte Carlo pricing instead")]
    TooManyNames { n: usize, cutoff: usize },

    #[error("degenerate marginal: default probability {p} has zero variance, correlation is undefined")]
    DegenerateMarginal { p: f64 },

    #[error("inconsistent default correlation {rho}: joint probability P({outcome}) = {value} is negative")]
    InconsistentCorrelation {
        rho: f64,
        outcome: &'static str,
        value: f64,
    },

    #[error("invalid correlation matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid probability table: {0}")]
    InvalidTable(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("attachment {attachment} outside (0, {capacity}]")]
    AttachmentOutOfRange { attachment: f64, capacity: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    /// True for numerical and solver failures, false for input problems.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Solver(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
