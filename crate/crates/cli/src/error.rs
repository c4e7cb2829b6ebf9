use std::path::PathBuf;

use drfs_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Load { path: PathBuf, source: CoreError },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Violation(String),

    #[error("{0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Write { .. } => 1,
            CliError::Load { source, .. } => core_code(source),
            CliError::Core(e) => core_code(e),
            CliError::Usage(_) => 3,
            CliError::Inconclusive(_) => 2,
            CliError::Violation(_) => 5,
        }
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::NotConverged(_) => 2,
        CoreError::Parameter(_)
        | CoreError::SingleClass
        | CoreError::TooManyClasses(_)
        | CoreError::InvalidLabel { .. } => 3,
        CoreError::UncertaintyOverflow { .. } => 4,
        _ => 1,
    }
}
