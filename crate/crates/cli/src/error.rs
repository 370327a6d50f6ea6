use std::path::Path;

use thiserror::Error;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A required input artifact is absent or was built from another config.
    #[error("{message}: {path}")]
    Artifact { path: String, message: String },

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Core errors raised while validating inputs are all config errors.
    pub fn invalid_config(e: retire_core::Error) -> Self {
        match e {
            retire_core::Error::Config { key, message } => CliError::Config { key, message },
            other => CliError::config("model", other.to_string()),
        }
    }

    pub fn missing(path: &Path) -> Self {
        CliError::Artifact {
            path: path.display().to_string(),
            message: "missing artifact".into(),
        }
    }

    pub fn stale(path: &Path, detail: &str) -> Self {
        CliError::Artifact {
            path: path.display().to_string(),
            message: format!("stale {detail}: built from a different config"),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Artifact { .. } => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<retire_core::Error> for CliError {
    fn from(e: retire_core::Error) -> Self {
        match e {
            retire_core::Error::Config { key, message } => CliError::Config { key, message },
            other => CliError::Numeric(other.to_string()),
        }
    }
}
