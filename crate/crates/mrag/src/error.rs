//! Crate-wide error type.
//!
//! Variants are grouped by how callers react to them: configuration and
//! schema problems abort before any work starts, service errors mark whether
//! a retry can help, and store corruption always refuses to proceed so stale
//! or truncated artifacts are never silently reused.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corrupt store at {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("unsupported format version {found} at {path} (this build reads version {expected})")]
    FormatVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("invalid request to {service}: {message}")]
    InvalidRequest {
        service: &'static str,
        message: String,
    },

    #[error("{service} service: {message}{}", if *.retryable { " (retryable)" } else { "" })]
    Service {
        service: &'static str,
        retryable: bool,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dims { expected: usize, got: usize },

    #[error("duplicate id {id} while {context}")]
    DuplicateId { id: String, context: String },

    #[error("replaying query {query_id} produced a different record: services are not deterministic")]
    Replay { query_id: String },

    #[error(transparent)]
    Render(#[from] mrag_core::prompt::RenderError),

    #[error(transparent)]
    Catalog(#[from] mrag_core::prompt::CatalogError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a path to a raw IO error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether retrying the same call can plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::Service {
                retryable: true,
                ..
            }
        )
    }
}
