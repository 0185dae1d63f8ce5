use std::path::PathBuf;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] robust_reward::Error),
    #[error("no run files found under {0}")]
    EmptyInput(PathBuf),
    #[error("unknown suite {name:?}; valid names: {}", valid.join(", "))]
    UnknownSuite {
        name: String,
        valid: Vec<&'static str>,
    },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
