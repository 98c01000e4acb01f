use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by calibkit.
///
/// Every variant except [`CalibError::Io`] is a problem with the input data
/// or arguments; the CLI maps those to exit code 1 and I/O failures to 2.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: bad header: {message}", path.display())]
    BadHeader { path: PathBuf, line: u64, message: String },

    #[error("{}:{line}: column {column}: not a number: {value:?}", path.display())]
    NonNumeric {
        path: PathBuf,
        line: u64,
        column: usize,
        value: String,
    },

    #[error("{}:{line}: label {label} outside [0, {class_count})", path.display())]
    LabelOutOfRange {
        path: PathBuf,
        line: u64,
        label: String,
        class_count: usize,
    },

    #[error("{}:{line}: {message}", path.display())]
    MalformedRow { path: PathBuf, line: u64, message: String },

    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CalibError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        CalibError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CalibError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures reading or writing files (as opposed to bad data).
    pub fn is_io(&self) -> bool {
        matches!(self, CalibError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, CalibError>;
