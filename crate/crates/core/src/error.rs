use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding a matrix file. Every variant names the byte
/// offset where decoding stopped.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected \"ZSEM\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {found} at byte 4")]
    BadVersion { found: u8 },
    #[error("truncated header at byte {offset}: need 13 bytes")]
    TruncatedHeader { offset: usize },
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("trailing data at byte {offset}: {extra} unexpected bytes")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("non-finite value at byte {offset} (row {row}, col {col})")]
    NonFinite { offset: usize, row: usize, col: usize },
    #[error("empty matrix: rows={rows}, cols={cols}")]
    Empty { rows: usize, cols: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv output {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("object label {label:?} has no definition")]
    MissingDefinition { label: String },
    #[error("top-T value {t} out of range 1..={max} for {context}")]
    TopOutOfRange { t: usize, max: usize, context: String },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("video {video_id}: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("run {run_index}: {source}")]
    Run {
        run_index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn mismatch(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    /// Innermost error, skipping video and run annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Video { source, .. } | Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}
