use std::path::PathBuf;

use opstress_core::Error as CoreError;

/// Errors of the harness: core failures plus file and format problems.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("image export failed: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Process exit code for a failed validation (bad input, files, formats).
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code for a numerical failure (divergence, singular system).
pub const EXIT_NUMERICAL: i32 = 3;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| Self::Json { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}
