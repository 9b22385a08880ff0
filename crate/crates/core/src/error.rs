use thiserror::Error;

/// Errors raised by the estimation, simulation and experiment layers.
#[derive(Debug, Error)]
pub enum UssError {
    /// A context coordinate fell outside the lift's admissible domain.
    #[error("context coordinate {index} = {value} lies outside [-1, 1]")]
    Domain { index: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Non-finite or otherwise unusable numeric input.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// The choose/learn cycle was driven out of order.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("internal state error: {0}")]
    InternalState(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl UssError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        UssError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// `2` for anything touching the filesystem, `1` for everything else
    /// (configuration, validation and numerical errors).
    pub fn exit_code(&self) -> i32 {
        match self {
            UssError::Io { .. } => 2,
            UssError::Csv(e) if e.is_io_error() => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, UssError>;
