use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("acceptance violation: {0}")]
    Acceptance(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl From<sipba_core::Error> for CliError {
    fn from(e: sipba_core::Error) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration and I/O problems, 2 for
    /// numerical failures, 3 for acceptance violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 1,
            Self::Numerical(_) => 2,
            Self::Acceptance(_) => 3,
        }
    }
}
