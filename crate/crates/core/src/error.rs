use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vocabulary: {0}")]
    EmptyVocabulary(String),

    #[error("keyword `{word}` is not in the vocabulary")]
    UnknownKeyword { word: String },

    #[error("class {class} has no usable in-vocabulary words")]
    EmptyClass { class: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed embedding file at line {line}: {reason}")]
    MalformedEmbeddings { line: usize, reason: String },

    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: String, detail: String },

    #[error("vMF rejection sampler exceeded {0} proposals")]
    RejectionLimit(usize),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("training cancelled")]
    Cancelled,

    #[error("vocabulary hash {found} does not match the model's {expected}")]
    VocabMismatch { expected: String, found: String },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("corpus input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
