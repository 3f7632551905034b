use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Classify a model error raised while validating settings.
    pub fn config(e: latmod_core::Error) -> Self {
        CliError::Config(e.to_string())
    }

    /// Classify a model error raised while ingesting data.
    pub fn data(e: latmod_core::Error) -> Self {
        match e {
            latmod_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }

    /// Classify a model error raised while sampling or summarizing.
    pub fn numeric(e: latmod_core::Error) -> Self {
        match e {
            latmod_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}
