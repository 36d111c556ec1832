use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Rejection reasons for a token-dump file. Each variant names the failing field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"PRMG\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated header: need 32 bytes, found {0}")]
    TruncatedHeader(usize),
    #[error("zero dimension in field `{0}`")]
    ZeroDimension(&'static str),
    #[error("grid mismatch: h*w = {h}*{w} != n = {n}")]
    GridMismatch { n: u32, h: u32, w: u32 },
    #[error("payload size overflows in field `{0}`")]
    SizeOverflow(&'static str),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing bytes after payload: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty logits")]
    EmptyLogits,
    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid token set: {0}")]
    InvalidTokenSet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("budget exceeds token count ({budget} > {n})")]
    BudgetExceedsTokenCount { budget: usize, n: usize },
    #[error("index {index} out of range for {n} tokens")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
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
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
