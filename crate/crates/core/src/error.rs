use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the sensing pipeline.
///
/// Variants are grouped by class; [`Error::exit_code`] maps each class to the
/// process exit status used by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates a documented precondition.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    /// A scripted scene cannot be simulated.
    #[error("script error: {0}")]
    Script(String),

    /// A text file could not be parsed.
    #[error("{path}:{line}: {field}: {reason}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        reason: String,
    },

    /// The data carries no usable signal for the requested stage.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    /// A pipeline stage failed; the exit code is that of the cause.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(
        path: impl Into<String>,
        line: usize,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage: stage.to_string(), source: Box::new(other) },
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidInput { .. } => 2,
            Error::Script(_) => 3,
            Error::Parse { .. } => 4,
            Error::Degenerate(_) => 5,
            Error::Io { .. } => 6,
            Error::Serde(_) => 7,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
