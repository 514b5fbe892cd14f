use thiserror::Error;

/// Errors produced by the forecasting engine and its subroutines.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input fell outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent arguments (lengths, indices, sizes).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Operation is not valid for the current state (e.g. horizon exhausted).
    #[error("invalid state: {0}")]
    State(String),

    /// Experiment configuration rejected; `path` names the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Audit inputs were not logged for a run.
    #[error("audit unavailable: {0}")]
    AuditUnavailable(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}
