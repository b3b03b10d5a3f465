use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid sample {sample_id}: {message}")]
    InvalidSample { sample_id: String, message: String },

    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("not enough samples in cell (year {year}, {label}): requested {requested}, available {available}")]
    Insufficient {
        year: i32,
        label: crate::corpus::Label,
        requested: usize,
        available: usize,
    },

    #[error("year range {start}-{end} is outside the corpus range {corpus_start}-{corpus_end}")]
    EmptyRange {
        start: i32,
        end: i32,
        corpus_start: i32,
        corpus_end: i32,
    },

    #[error("corpus spans {0} years; at least 6 are needed for the builtin variants")]
    RangeTooShort(usize),

    #[error("too few samples for {k}-fold split: class {label} has {count}")]
    TooFewSamples {
        k: usize,
        label: crate::corpus::Label,
        count: usize,
    },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model kind {0} is not differentiable")]
    NotDifferentiable(String),

    #[error("catalog mismatch: {0}")]
    CatalogMismatch(String),

    #[error("sample {0} has no present features")]
    NoPresentFeatures(String),

    #[error("singular surrogate regression for sample {0}")]
    SingularRegression(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("top-T value {t} outside [1, {max}]")]
    TopOutOfRange { t: usize, max: usize },

    #[error("{context}: {source}")]
    Cell {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_cell(self, context: impl Into<String>) -> Self {
        Error::Cell {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data rather than by a failed computation.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidSample { .. }
            | Error::InvalidCatalog(_)
            | Error::InvalidSpec(_)
            | Error::Insufficient { .. }
            | Error::EmptyRange { .. }
            | Error::RangeTooShort(_)
            | Error::TooFewSamples { .. }
            | Error::SingleClass
            | Error::CatalogMismatch(_)
            | Error::Json(_) => true,
            Error::Cell { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
