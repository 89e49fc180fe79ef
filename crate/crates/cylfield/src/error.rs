use std::io;
use std::path::Path;

use thiserror::Error;

/// Failures surfaced by the command line, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or missing inputs.
    #[error("{0}")]
    BadInput(String),
    /// An artifact on disk exists but cannot be decoded.
    #[error("corrupt artifact {path}: {reason}")]
    Corrupt { path: String, reason: String },
    /// Training produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) => 2,
            CliError::Corrupt { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn corrupt(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Corrupt {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<cylfield_core::Error> for CliError {
    fn from(e: cylfield_core::Error) -> Self {
        match e {
            cylfield_core::Error::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::BadInput(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads an input file; a missing or unreadable input is a usage error.
pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::BadInput(format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}
