use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("encoder is not present in this learning system")]
    EncoderAbsent,

    #[error("plan pool scores are stale; evaluate before reading")]
    StalePool,

    #[error("unresolvable belief trace reference {0}")]
    UnresolvedTrace(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }

    /// True for errors caused by bad caller input rather than a runtime failure.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::InvalidTopology(_)
                | Error::Shape { .. }
                | Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::EncoderAbsent
        )
    }
}
