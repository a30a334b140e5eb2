use std::path::PathBuf;

/// Errors surfaced by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The caller broke an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value is invalid; `key` is the dotted path of the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A file exists but its contents are malformed.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A required input file is missing.
    #[error("missing input: {0}")]
    MissingInput(PathBuf),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("chat client error: {0}")]
    Client(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingInput(path);
        }
        Error::Io { path, source }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Config { .. } => "config",
            Error::Format { .. } => "format",
            Error::MissingInput(_) => "missing_input",
            Error::NonFinite(_) => "non_finite",
            Error::Client(_) => "client",
            Error::Io { .. } => "io",
        }
    }
}
