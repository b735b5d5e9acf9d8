use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error(transparent)]
    Numeric(#[from] regcert_core::Error),
    #[error("{0}")]
    Disagreement(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> CliError {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 1 I/O, 2 config or input schema, 3 numeric or
    /// regime, 4 oracle disagreement.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) | CliError::Schema { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Disagreement(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
