use thiserror::Error;

/// Errors raised by the numeric core and the model built on top of it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward already ran on this tape; record a new forward pass first")]
    TapeConsumed,
    #[error("loss node must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sequence {id}: {reason}")]
    Alignment { id: String, reason: String },
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Error {
    Error::Shape {
        context: context.into(),
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    }
}
