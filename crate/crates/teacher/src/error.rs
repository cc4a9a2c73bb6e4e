use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),

    #[error("candidate {0} is not pending")]
    NotPending(String),

    #[error("frame {frame} out of range for candidate {id}")]
    NoSuchFrame { id: String, frame: usize },

    #[error("no stored preference pairs to train on")]
    EmptyStore,

    #[error("invalid request: {0}")]
    BadRequest(String),

    #[error(transparent)]
    Core(#[from] manic_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
