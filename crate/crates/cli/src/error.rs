use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    TopologyFile {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Model(#[from] orsim_core::Error),

    #[error("output: {0}")]
    Output(#[from] std::io::Error),

    #[error("{0} verification case(s) failed")]
    VerificationFailed(usize),
}

impl CliError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 2 for failed verification, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerificationFailed(_) => 2,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(std::io::Error::other(e))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
