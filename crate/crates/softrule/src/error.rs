//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by rule-space construction, training, extraction and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{context}: value {value} outside [0, 1]")]
    OutOfUnitRange { context: &'static str, value: f64 },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("{0} must be positive, got {1}")]
    NotPositive(&'static str, f64),

    #[error("{0} must lie in {1}, got {2}")]
    OutOfRange(&'static str, &'static str, f64),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("rule parse error at byte {position}: {message}")]
    RuleParse { position: usize, message: String },

    #[error("training aborted: non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("dataset with {0} rows is too small to split into nonempty parts")]
    DatasetTooSmall(usize),

    #[error("schedule epoch {t} exceeds total epochs {total}")]
    EpochOutOfRange { t: usize, total: usize },

    #[error("constant `{0}` does not appear in the declared domain")]
    UnknownConstant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse {what}: {message}")]
    Format { what: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
