use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin {0}: expected a non-negative multiple of 1/2")]
    InvalidSpin(String),
    #[error("invalid tensor index k={k}, q={q}: {reason}")]
    InvalidTensorIndex { k: i32, q: i32, reason: String },
    #[error("invalid microwave transition m_minus={m_minus}, m_plus={m_plus}: {reason}")]
    InvalidTransition {
        m_minus: String,
        m_plus: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Lie closure exceeded the su(d) dimension {limit}; numerical tolerance too loose")]
    ClosureOverflow { limit: usize },
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
