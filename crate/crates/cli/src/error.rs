use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected configuration, parameters or initial data.
    #[error("{0}")]
    Validation(String),
    #[error("{phase} failed{}: {message}", at(*.time))]
    Runtime {
        phase: String,
        time: Option<f64>,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn at(time: Option<f64>) -> String {
    time.map(|t| format!(" at t = {t}")).unwrap_or_default()
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn runtime(phase: &str, time: Option<f64>, message: impl Into<String>) -> Self {
        CliError::Runtime {
            phase: phase.into(),
            time,
            message: message.into(),
        }
    }

    /// 1 validation, 2 runtime, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }
}
