//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by schema/data loading, model handling, extraction and
/// evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema parse error at line {line}: {message}")]
    SchemaParse { line: usize, message: String },

    #[error("csv parse error at row {row}: {message}")]
    CsvParse { row: usize, message: String },

    #[error("missing column `{name}`")]
    MissingColumn { name: String },

    #[error("row {row}: unknown value `{value}` for column `{column}`")]
    UnknownValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: cannot parse label `{value}` (expected 0/1 or the declared positive value)")]
    LabelParse { row: usize, value: String },

    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("unsupported activation `{found}` (supported: relu, sigmoid)")]
    UnsupportedActivation { found: String },

    #[error("malformed weight file: {0}")]
    MalformedWeights(String),

    #[error("malformed rule file: {0}")]
    MalformedRules(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("instance set is empty")]
    EmptyInstanceSet,

    #[error("assignment space has {size} elements, above the cap of {cap} (use sampling instead)")]
    CapExceeded { size: u128, cap: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rule list invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
