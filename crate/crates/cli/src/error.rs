use std::fmt;

use ssmlab::SsmError;

use crate::config::ConfigError;

/// Failure of a CLI command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(SsmError),
    Io(String),
    VerifyFailed(String),
}

impl CliError {
    /// 1 for configuration and argument problems, 2 for numerical failures,
    /// 3 for failed verification checks.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(e) => match e {
                SsmError::InvalidArgument(_) | SsmError::Dimension(_) | SsmError::Regime { .. } => 1,
                _ => 2,
            },
            CliError::VerifyFailed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Numerical(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::VerifyFailed(s) => write!(f, "verification failed: {s}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<SsmError> for CliError {
    fn from(e: SsmError) -> Self {
        CliError::Numerical(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
