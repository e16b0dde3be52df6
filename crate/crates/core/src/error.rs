use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid stream spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("factorization failed after jitter escalation (condition estimate {condition_estimate:.3e})")]
    Factorization { condition_estimate: f64 },

    #[error("{what} of size {size} exceeds the limit of {cap}")]
    TooLarge { what: &'static str, size: u128, cap: u128 },

    #[error("observation {0} is already in the selected set")]
    AlreadySelected(usize),

    #[error("set is not contained in the full observation space")]
    NotSubset,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("line {line}, column `{column}`: {message}")]
    Malformed { line: u64, column: String, message: String },

    #[error("input {0} contains no data rows")]
    Empty(PathBuf),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
