use std::path::{Path, PathBuf};

use gdnn_core::{ErrorKind, GdnnError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] GdnnError),

    #[error("{}: {message}", .path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },

    #[error("checkpoint was trained on a different graph (fingerprint {expected}, data gives {actual})")]
    FingerprintMismatch { expected: String, actual: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 0 success, 1 usage/config, 2 numeric failure, 3 data validation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Numeric => 2,
                ErrorKind::Data => 3,
            },
            CliError::Config { .. } | CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Format { .. } | CliError::FingerprintMismatch { .. } | CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
