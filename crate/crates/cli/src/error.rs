use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use gnssrag_core::Error;
use serde::Serialize;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const LOAD: i32 = 2;
    pub const BACKEND: i32 = 3;
}

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Embed,
    Retrieve,
    Assemble,
    Describe,
    Classify,
    Index,
    Evaluate,
    Project,
    Write,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Embed => "embed",
            Stage::Retrieve => "retrieve",
            Stage::Assemble => "assemble",
            Stage::Describe => "describe",
            Stage::Classify => "classify",
            Stage::Index => "index",
            Stage::Evaluate => "evaluate",
            Stage::Project => "project",
            Stage::Write => "write",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },

    #[error("snapshot {0} is in neither the dataset nor the index")]
    NotFound(u64),

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{0}")]
    Usage(String),

    /// Request content that cannot be decoded.
    #[error("invalid `{field}`: {reason}")]
    BadInput { field: &'static str, reason: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl AppError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        AppError::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            AppError::Stage { stage, .. } => Some(*stage),
            AppError::NotFound(_) => Some(Stage::Load),
            _ => None,
        }
    }

    pub fn is_backend(&self) -> bool {
        matches!(self, AppError::Stage { source, .. } if source.is_backend())
    }

    /// True when the caller's input is at fault rather than stored data.
    pub fn is_input(&self) -> bool {
        match self {
            AppError::Config { .. } | AppError::Usage(_) | AppError::BadInput { .. } => true,
            AppError::Stage { source, .. } => matches!(
                source,
                Error::ParameterDomain { .. }
                    | Error::Dimension { .. }
                    | Error::Contract(_)
                    | Error::Unsupported(_)
                    | Error::NotEstimable(_)
                    | Error::Leakage { .. }
                    | Error::Numerical { .. }
            ),
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_backend() {
            exit::BACKEND
        } else if self.is_input() {
            exit::USAGE
        } else {
            exit::LOAD
        }
    }
}

/// Attaches a stage to core results.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, AppError>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, AppError> {
        self.map_err(|source| AppError::Stage { stage, source })
    }
}
