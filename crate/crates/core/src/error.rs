use thiserror::Error;

pub type Result<T> = std::result::Result<T, EctError>;

#[derive(Debug, Error)]
pub enum EctError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl EctError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        EctError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        EctError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            EctError::Argument(_) => 2,
            EctError::Parse { .. } | EctError::Io { .. } => 3,
            EctError::Degenerate(_) | EctError::Numerical(_) | EctError::Internal(_) => 4,
        }
    }
}
