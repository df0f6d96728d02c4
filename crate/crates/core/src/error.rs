use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding an SVOL byte stream.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}, expected \"SVOL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported SVOL version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),
    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("payload holds {found} bytes but dims imply {expected}")]
    DimsMismatch { expected: usize, found: usize },
    #[error("invalid orientation bytes {0:?}")]
    BadOrientation([u8; 4]),
}

/// Failures raised by classifier and segmenter backends.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to launch model process `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed response line {line:?}: {reason}")]
    Protocol { line: String, reason: String },
    #[error("model reported failure: {0}")]
    Remote(String),
    #[error("model call timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("model process closed its output")]
    Closed,
    #[error("model I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("expected {expected} payload, found {found}")]
    PayloadType {
        expected: &'static str,
        found: &'static str,
    },
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("degenerate sample: no nonzero differences")]
    DegenerateSample,
    #[error("pairing: {0}")]
    Pairing(String),
    #[error("empty mask: {0}")]
    EmptyMask(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("no segmenter registered for label {0}")]
    MissingRoute(String),
    #[error("svol format: {0}")]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
