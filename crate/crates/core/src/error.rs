use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// NaN/Inf or other numerical breakdown.
    Numeric,
    /// Input data violates a structural invariant.
    Data,
}

#[derive(Debug, Error)]
pub enum GdnnError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io: {0}")]
    Stream(#[from] std::io::Error),

    #[error("node id {id} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { id: u64, num_nodes: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(u64),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("negative sampling gave up after {attempts} attempts (graph has too few non-edges)")]
    RejectionExhausted { attempts: usize },
}

impl GdnnError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            GdnnError::NonFinite(_) => ErrorKind::Numeric,
            GdnnError::Config(_) | GdnnError::UnknownParam(_) | GdnnError::Shape { .. } => {
                ErrorKind::Usage
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        GdnnError::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = GdnnError> = std::result::Result<T, E>;
