use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFiniteInput { row: usize, col: usize },

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("node {node} has zero degree")]
    IsolatedNode { node: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} has no labeled support")]
    EmptyClass { class: usize },

    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("class {class:?} has {available} rows, episode needs {required}")]
    InsufficientClassSize {
        class: String,
        available: usize,
        required: usize,
    },

    #[error("dataset has {available} usable classes, episode needs {required}")]
    InsufficientClassCount { available: usize, required: usize },

    #[error("episode has no unlabeled pool for pseudo-labeling")]
    NoUnlabeledPool,

    #[error("nodes {i} and {j} share the same class")]
    SameClassPair { i: usize, j: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
