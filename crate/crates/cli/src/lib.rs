//! Command implementations behind the `asyncavg` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl CliError {
    /// 1 usage or parse error, 2 domain validation failure, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Io(_) => 1,
            CliError::Domain(_) | CliError::HeaderMismatch(_) => 2,
            CliError::VerificationFailed(_) => 3,
        }
    }

    pub(crate) fn with_context(self, context: &str) -> Self {
        match self {
            CliError::Parse(m) => CliError::Parse(format!("{context}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{context}: {m}")),
            CliError::Domain(m) => CliError::Domain(format!("{context}: {m}")),
            CliError::HeaderMismatch(m) => CliError::HeaderMismatch(format!("{context}: {m}")),
            CliError::VerificationFailed(m) => CliError::VerificationFailed(format!("{context}: {m}")),
        }
    }
}

impl From<asyncavg::Error> for CliError {
    fn from(e: asyncavg::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
