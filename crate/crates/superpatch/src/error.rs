use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing input file: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("cannot read or write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("stale feature cache {}: {reason}; rerun with --rebuild-cache to recompute it", path.display())]
    StaleCache { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] superpatch_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 validation, 3 IO, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingPath(_) | CliError::StaleCache { .. } => 2,
            CliError::Core(superpatch_core::Error::NotSubmodular(..)) => 4,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Internal(_) => 4,
        }
    }
}

/// Fails with [`CliError::MissingPath`] unless `path` exists.
pub fn require_exists(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingPath(path.to_path_buf()))
    }
}
