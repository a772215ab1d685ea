use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("backward called on a value with no recorded graph")]
    NoGraph,
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("parameter {0} requires grad but has no gradient")]
    MissingGrad(usize),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;
