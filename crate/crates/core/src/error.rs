use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the search library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("strategies disagree on query #{query} at radius {radius}: {detail}")]
    CorrectnessFailure {
        query: usize,
        radius: u32,
        detail: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad or inconsistent input data, as opposed
    /// to caller misuse.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::Corruption(_)
                | Error::EmptyInput(_)
                | Error::Parse(_)
                | Error::InsufficientData(_)
                | Error::Io { .. }
                | Error::CorrectnessFailure { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid;
