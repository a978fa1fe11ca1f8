use std::path::PathBuf;

use thiserror::Error;

use crate::storage::{ContainerError, CsrError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("operation requires a nonempty mask")]
    EmptyMask,

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("non-finite value at pixel {0}")]
    NonFinite(usize),

    #[error("error region is empty; segmentation already matches the target")]
    NothingToCorrect,

    #[error("cannot sample from an empty pool")]
    EmptyPool,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown subset id: {0}")]
    UnknownSubset(String),

    #[error("missing file referenced by manifest: {0}")]
    MissingFile(PathBuf),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error(transparent)]
    Csr(#[from] CsrError),

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error(transparent)]
    Segmenter(#[from] crate::proposer::SegmenterError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Raster {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
