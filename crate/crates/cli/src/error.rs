use std::process::ExitCode;

use grbm_core::GrbmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A prerequisite file is absent; the message names the command that produces it.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::MissingArtifact(_) => 4,
            CliError::Other(_) => 1,
        })
    }
}

impl From<GrbmError> for CliError {
    fn from(e: GrbmError) -> Self {
        match e {
            GrbmError::Config(_) => CliError::Config(e.to_string()),
            GrbmError::Numeric { .. } => CliError::Numeric(e.to_string()),
            GrbmError::Resolution { .. } | GrbmError::Checkpoint { .. } => {
                CliError::MissingArtifact(e.to_string())
            }
            GrbmError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingArtifact(e.to_string())
            }
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
