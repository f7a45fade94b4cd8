use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: bad indices, labels, shapes or potentials.
    #[error("invalid input: {0}")]
    Input(String),

    /// The operation is defined only for a narrower class of models.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Exact computation would exceed the configured state-space budget.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Every candidate variable was excluded.
    #[error("no variable left to select: {0}")]
    Exhausted(String),

    /// A randomized construction ran out of attempts.
    #[error("retry budget exhausted: {0}")]
    Retry(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
