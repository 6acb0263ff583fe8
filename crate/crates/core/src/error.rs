use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Every variant belongs to one [`ErrorKind`], which the command-line front
/// end maps onto its exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("singular bread matrix: {0}")]
    SingularBread(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::Contract(_) | Error::Io { .. } => ErrorKind::Config,
            Error::Data(_) | Error::Domain(_) => ErrorKind::Data,
            Error::Numerical(_) | Error::SingularBread(_) | Error::Generation(_) => {
                ErrorKind::Numerical
            }
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
