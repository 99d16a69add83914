use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty label sequence")]
    EmptySequence,

    #[error("non-contiguous segments: {0}")]
    NonContiguous(String),

    #[error("non-maximal segments: adjacent segments at frames {0} and {1} share a label")]
    NonMaximal(usize, usize),

    #[error("unknown class code {0:?}")]
    UnknownClass(String),

    #[error("unknown label at line {line}: {token:?}")]
    UnknownLabel { line: usize, token: String },

    #[error("length mismatch: ground truth has {gt} frames, prediction has {pred}")]
    LengthMismatch { gt: usize, pred: usize },

    #[error("frame rate mismatch: {gt} vs {pred}")]
    FpsMismatch { gt: f64, pred: f64 },

    #[error("invalid frame rate {0}")]
    InvalidFps(f64),

    #[error("invalid task id {0} (expected 1-5)")]
    InvalidTask(i64),

    #[error("invalid body part {0:?}")]
    InvalidPart(String),

    /// A document failed schema validation; `location` names where.
    #[error("{location}: {message}")]
    Schema { location: String, message: String },

    #[error("insufficient pairs: need at least 2, got {0}")]
    InsufficientPairs(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("session {id}: {source}")]
    Session {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn in_session(self, id: impl Into<String>) -> Self {
        Error::Session {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
