use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("labels required: {0}")]
    MissingLabels(String),

    #[error("did not converge after {iterations} iterations (last step {last_change:e})")]
    Unconverged {
        iterations: usize,
        last_change: f64,
        /// Final iterate, kept so callers can still inspect it.
        last_iterate: Vec<f64>,
    },

    #[error("outside the scope of the toy-model analysis: {0}")]
    OutOfTheoremScope(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
