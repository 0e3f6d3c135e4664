use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("frame {index} ({path}): {message}")]
    Frame {
        index: usize,
        path: PathBuf,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("image decode failed for {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate annotation for person {person_id} at frame {frame_index}")]
    DuplicateAnnotation { person_id: String, frame_index: usize },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("corrupt model file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("proposal {person_id}@{start_frame}: {source}")]
    Proposal {
        person_id: String,
        start_frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
