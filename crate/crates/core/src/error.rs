use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("bind error: {0}")]
    Bind(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("class '{class}' has no candidate rows in the support pool")]
    EmptyClass { class: String },

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("not enough classes: need at least 2, found {found}")]
    NotEnoughClasses { found: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("average precision undefined: no relevant items")]
    UndefinedAp,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing fold: record '{id}' has no fold assignment")]
    MissingFold { id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
