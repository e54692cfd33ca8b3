use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tree or expression is malformed or references something that does not exist.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// One of the two concept classes carries no mass, so no balanced version exists.
    #[error("balanced distribution undefined: class {missing_class} has zero mass")]
    BalanceUndefined { missing_class: u8 },

    #[error("cannot condition on a zero-mass subset")]
    EmptyCondition,

    #[error("majority stacking needs at least one tree")]
    Arity,

    /// A search exceeded its configured budget. `reached` is how far it got.
    #[error("budget exceeded in {what}: limit {limit}, reached {reached}")]
    Budget {
        what: &'static str,
        limit: usize,
        reached: usize,
    },

    #[error("no multiset up to size {max_size} gives a correct majority at every point")]
    DerandomizeFailed { max_size: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::Budget { .. })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
