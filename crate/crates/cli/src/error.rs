use invkit_core::InvError;
use invkit_neuralkit::NeuralError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration or an inconsistent combination of inputs.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// Divergence or non-finite values during a solve or training run.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<InvError> for CliError {
    fn from(e: InvError) -> Self {
        match e {
            InvError::NonFinite(_) | InvError::Divergence(_) => CliError::Numerical(e.to_string()),
            InvError::Io(m) => CliError::Io(m),
            InvError::Neural(NeuralError::NonFinite(_)) => CliError::Numerical(e.to_string()),
            InvError::Neural(NeuralError::Checkpoint(_)) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        InvError::from(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
