use std::path::PathBuf;

use crate::event::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid event stream: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidStream(Vec<Violation>),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid soft label: {0}")]
    InvalidLabel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("extent mismatch: {left:?} vs {right:?}")]
    ExtentMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("class count mismatch: {left} vs {right}")]
    ClassCountMismatch { left: usize, right: usize },

    #[error("truncated file: {len} bytes is not a multiple of the {record_size}-byte record")]
    TruncatedFile { len: usize, record_size: usize },

    #[error("format error at record {record}: {reason}")]
    Format { record: usize, reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("payload too short: expected {expected} bytes, found {found}")]
    ShortPayload { expected: usize, found: usize },

    #[error("value {value} at element {index} does not fit dtype u16")]
    DtypeOverflow { index: usize, value: f32 },

    #[error("parse error at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error("stream has events but zero duration")]
    DegenerateDuration,

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty manifest")]
    EmptyManifest,

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_file(path: impl Into<PathBuf>, source: Error) -> Self {
        Error::InFile { path: path.into(), source: Box::new(source) }
    }
}
