use invkit_neuralkit::NeuralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InvError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("invalid scenario: {0}")]
    Taxonomy(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

pub type Result<T> = std::result::Result<T, InvError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(InvError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(InvError::NonFinite(what.to_string()));
    }
    Ok(())
}
