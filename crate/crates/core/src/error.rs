use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid hash family: {0}")]
    InvalidHashFamily(String),

    #[error("signature length mismatch: {left} vs {right}")]
    SignatureMismatch { left: usize, right: usize },

    /// Both operands of a similarity or union-size estimate are empty.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A phase or plan breaks a model rule; carries the failed check.
    #[error("plan violation: {0}")]
    PlanViolation(String),

    #[error("planner error: {0}")]
    Planner(String),

    /// Exhaustive search rejected the instance (too large or wrong shape).
    #[error("oracle cannot handle instance: {0}")]
    OracleUnsupported(String),

    #[error("invalid workload: {0}")]
    InvalidWorkload(String),

    #[error("{path}:{line}: {msg}")]
    KeyFile {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
