use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A numerical failure inside a recursion, tagged with where it happened.
    #[error("{context}: {source}")]
    AtStep {
        context: StepContext,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepContext {
    pub episode_id: Option<u64>,
    pub step: usize,
}

impl fmt::Display for StepContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.episode_id {
            Some(id) => write!(f, "episode {id}, step {}", self.step),
            None => write!(f, "step {}", self.step),
        }
    }
}

impl Error {
    pub fn at_step(self, episode_id: Option<u64>, step: usize) -> Self {
        Error::AtStep {
            context: StepContext { episode_id, step },
            source: Box::new(self),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
