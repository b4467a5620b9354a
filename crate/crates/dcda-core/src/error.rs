//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty batch: {0}")]
    EmptyBatch(String),

    #[error("non-finite loss in term {term}: {value}")]
    NonFiniteLoss { term: String, value: f64 },

    #[error("non-finite gradient produced by {term}")]
    NonFiniteGradient { term: String },

    #[error("class {class} absent from labels: {context}")]
    ClassAbsent { class: usize, context: String },

    #[error("invalid label {value} (expected 0 or 1): {context}")]
    InvalidLabel { value: usize, context: String },

    #[error("labels required: {0}")]
    MissingLabels(String),

    #[error("unknown training mode `{0}` (expected one of {1})")]
    UnknownMode(String, String),

    #[error("{path}: parse error at row {row}, column {col}: {message}")]
    CsvParse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
