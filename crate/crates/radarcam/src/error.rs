use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const PARTIAL: i32 = 1;
    pub const DIVERGED: i32 = 2;
    pub const IO: i32 = 3;
    pub const USAGE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A data file exists but its contents are malformed.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    /// Configuration and spec files, with a 1-based line number.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("{failed} of {total} frames failed")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Core(#[from] radarcam_core::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        CliError::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.as_ref().to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use radarcam_core::Error as E;
        match self {
            CliError::Io { .. } | CliError::Format { .. } => exit::IO,
            CliError::Parse { .. } | CliError::Usage(_) | CliError::Shape(_) => exit::USAGE,
            CliError::Diverged { .. } => exit::DIVERGED,
            CliError::Partial { .. } => exit::PARTIAL,
            CliError::Core(e) => match e {
                E::DivergenceDetected { .. } => exit::DIVERGED,
                E::ShapeMismatch { .. } | E::KindMismatch { .. } => exit::USAGE,
                _ => exit::PARTIAL,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
