use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed NPY header: {0}")]
    MalformedHeader(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("missing sidecar metadata file {0}")]
    MissingSidecar(PathBuf),

    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample count mismatch: subject has {subject} rows, atlas has {atlas}")]
    SampleCountMismatch { subject: usize, atlas: usize },

    #[error("dataset hash mismatch: subject {subject}, atlas {atlas}")]
    DatasetHashMismatch { subject: String, atlas: String },

    #[error("duplicate feature index {0}")]
    DuplicateIndex(usize),

    #[error("index {index} out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },

    #[error("parse error: {0}")]
    ParseError(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("orthogonal Procrustes needs d_s <= d_c, got d_s={d_s}, d_c={d_c}")]
    DimensionOrder { d_s: usize, d_c: usize },

    #[error("k={k} exceeds the number of samples {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("concept query has no nonzero entry")]
    EmptyQuery,

    #[error("no embedding row passes the selection rule")]
    NoMatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("query vector has zero norm")]
    ZeroQuery,

    #[error("a + lambda * direction is the zero vector")]
    DegenerateSum,

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("ratings for query {0} have no lambda = 0 baseline")]
    MissingBaseline(String),

    #[error("baseline rate for query {0} is 1, faithfulness undefined")]
    SaturatedBaseline(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

impl Error {
    /// Errors caused by incompatible arguments or inputs rather than by the
    /// numbers themselves. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::ConfigInvalid(_)
                | Error::SampleCountMismatch { .. }
                | Error::DatasetHashMismatch { .. }
                | Error::DimensionOrder { .. }
                | Error::KTooLarge { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure { path: path.into(), source }
    }
}
