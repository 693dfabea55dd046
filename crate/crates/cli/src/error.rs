use thiserror::Error;

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line, config file or model file.
    #[error("{0}")]
    Config(String),

    /// Dataset missing, unreadable or failing verification; output not writable.
    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    /// Classifies a core error raised while handling datasets or files.
    pub fn data(e: snn_core::Error) -> Self {
        match e {
            snn_core::Error::Divergence(m) => CliError::Divergence(m),
            snn_core::Error::Usage(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }

    /// Classifies a core error raised while reading a model or validating
    /// parameters.
    pub fn config(e: snn_core::Error) -> Self {
        match e {
            snn_core::Error::Divergence(m) => CliError::Divergence(m),
            snn_core::Error::Io(io) => CliError::Data(io.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub fn io_error(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("cannot {what} {}: {e}", path.display()))
}
