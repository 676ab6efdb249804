use thiserror::Error;

/// Unified error type for the library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (maps to exit code 2).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Array shape or dimension mismatch between inputs.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Numerical breakdown: non-finite values, failed factorization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// No valid plan or stitch could be produced (maps to exit code 1).
    #[error("planning failed: {0}")]
    PlanFailed(String),

    /// Malformed file contents: bad magic, version, truncation (exit code 3).
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// Underlying I/O failure (exit code 3).
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// Process exit code for the CLI: 1 runtime/planning, 2 usage, 3 file.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::ShapeMismatch(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Numerical(_) | Error::PlanFailed(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
