use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the contract they guard: parameter domains,
/// dimensional contracts, data integrity, store state, on-disk formats,
/// and the two HTTP clients (external encoder, remote describer).
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{field}` out of domain: {reason}")]
    ParameterDomain { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, received {received}")]
    Dimension { expected: usize, received: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("invalid state: {0}")]
    State(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("request timed out after {0} ms")]
    Timeout(u64),

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not estimable: {0}")]
    NotEstimable(String),

    #[error("train/test leakage: {count} test ids also present in the index (first: {first})")]
    Leakage { count: usize, first: u64 },

    #[error("numerical failure at iteration {iteration}: {reason}")]
    Numerical { iteration: usize, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::ParameterDomain {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }

    /// True for failures that originate in a remote backend rather than in
    /// the caller's input or local state.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Transport(_) | Error::Timeout(_) | Error::MalformedResponse(_)
        )
    }
}

pub(crate) fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
