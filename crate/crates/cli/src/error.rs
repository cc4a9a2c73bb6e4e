use std::io::ErrorKind;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Failures split by exit code: bad input versus a failed computation.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<manic_core::Error> for CliError {
    fn from(e: manic_core::Error) -> Self {
        match &e {
            manic_core::Error::Io(io) if io.kind() == ErrorKind::NotFound => CliError::Usage(e.to_string()),
            manic_core::Error::Format(_) => CliError::Usage(e.to_string()),
            _ if e.is_precondition() => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<manic_teacher::Error> for CliError {
    fn from(e: manic_teacher::Error) -> Self {
        match e {
            manic_teacher::Error::Core(core) => core.into(),
            manic_teacher::Error::BadRequest(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        manic_core::Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
