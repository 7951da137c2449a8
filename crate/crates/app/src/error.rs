use serde_json::{json, Value};
use thiserror::Error;

use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] spheretopic::Error),

    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },

    #[error("model `{0}` is held by a running job")]
    Busy(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        AppError::NotFound { kind, id: id.into() }
    }

    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        use spheretopic::Error as E;
        match self {
            AppError::Core(e) => match e {
                E::EmptyVocabulary(_) => "empty_vocabulary",
                E::UnknownKeyword { .. } => "unknown_keyword",
                E::EmptyClass { .. } => "empty_class",
                E::InvalidArgument(_) => "invalid_argument",
                E::MalformedEmbeddings { .. } => "malformed_embeddings",
                E::NonFinite { .. } => "non_finite",
                E::RejectionLimit(_) => "rejection_limit",
                E::Diverged { .. } => "diverged",
                E::Cancelled => "cancelled",
                E::VocabMismatch { .. } => "vocab_mismatch",
                E::Snapshot(_) => "snapshot",
                E::Input(_) => "input",
                E::Io(_) => "io",
                E::Json(_) => "json",
            },
            AppError::NotFound { .. } => "not_found",
            AppError::Busy(_) => "conflict",
            AppError::BadRequest(_) => "bad_request",
            AppError::Usage(_) => "usage",
            AppError::Io(_) => "io",
            AppError::Json(_) => "json",
        }
    }

    /// HTTP status for this error.
    pub fn status(&self) -> u16 {
        use spheretopic::Error as E;
        match self {
            AppError::NotFound { .. } => 404,
            AppError::Busy(_) => 409,
            AppError::BadRequest(_) | AppError::Usage(_) | AppError::Json(_) => 400,
            AppError::Core(e) => match e {
                E::EmptyVocabulary(_)
                | E::UnknownKeyword { .. }
                | E::EmptyClass { .. }
                | E::InvalidArgument(_)
                | E::MalformedEmbeddings { .. }
                | E::VocabMismatch { .. }
                | E::Input(_)
                | E::Json(_) => 400,
                E::Cancelled => 409,
                _ => 500,
            },
            AppError::Io(_) => 500,
        }
    }

    /// `{"schema_version", "error": {"kind", "message", ...}}`; unknown-keyword
    /// errors also carry the offending `word`.
    pub fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let AppError::Core(spheretopic::Error::UnknownKeyword { word }) = self {
            err["word"] = json!(word);
        }
        json!({ "schema_version": SCHEMA_VERSION, "error": err })
    }
}
