use std::path::PathBuf;

/// Errors raised by the tracking library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid track map: {0}")]
    Map(String),

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("filter health: covariance eigenvalue {eigenvalue:e} below tolerance")]
    FilterHealth { eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Whether the error stems from user input or configuration rather than
    /// from the data being processed. Drives the CLI exit code. A missing
    /// file counts as usage.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Map(_) | Error::Scenario(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
