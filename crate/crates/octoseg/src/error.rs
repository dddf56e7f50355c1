//! Process-level errors with the stable exit-code contract:
//! 0 success, 2 config, 3 I/O or file format, 4 numeric failure.

use std::path::Path;

use octoseg_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) | AppError::Format(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            // shape/contract violations surface from bad user input or a
            // corrupted artifact; treat as configuration problems
            CoreError::Config(m) | CoreError::Shape(m) | CoreError::Contract(m) => {
                AppError::Config(m.to_string())
            }
            CoreError::Numeric(m) => AppError::Numeric(m.to_string()),
            CoreError::Format(kind, m) => AppError::Format(format!("{kind:?}: {m}")),
        }
    }
}

/// Attach the path to an I/O error; plain `io::Error` alone is useless in a
/// multi-file pipeline.
pub fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Io(format!("{}: {e}", path.display()))
}
