use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vessel parameters: {0}")]
    InvalidParams(String),

    #[error("integration diverged at t = {time:.3} s: non-finite state")]
    IntegrationDiverged { time: f64 },

    #[error("ellipse fit degenerate: {0}")]
    FitDegenerate(String),

    #[error("ellipse fit failed: {0}")]
    FitFailed(String),

    #[error("fitted conic is not an ellipse (b^2 - 4ac = {discriminant:.3e})")]
    NotAnEllipse { discriminant: f64 },

    #[error("innovation covariance is singular")]
    UpdateSingular,

    #[error("gain sum is singular, cannot weight estimates")]
    FusionSingular,

    #[error("terminal set construction failed: {0}")]
    TerminalSet(String),

    #[error("quadratic program: {0}")]
    Qp(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error class, used for CLI exit codes and machine-readable output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Io,
    Numerical,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Parse => "parse",
            ErrorCategory::Validation => "validation",
            ErrorCategory::Io => "io",
            ErrorCategory::Numerical => "numerical",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Parse => 3,
            ErrorCategory::Validation => 4,
            ErrorCategory::Io => 5,
            ErrorCategory::Numerical => 6,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } => ErrorCategory::Parse,
            Error::Validation { .. } | Error::InvalidParams(_) => ErrorCategory::Validation,
            Error::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
