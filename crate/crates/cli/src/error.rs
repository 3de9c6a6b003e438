use thiserror::Error;

/// Every failure the front end reports, one line each, with the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[parse]: {0}")]
    Parse(String),
    #[error("error[validation]: {0}")]
    Validation(String),
    #[error("error[runtime]: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<beamnet::Error> for CliError {
    fn from(e: beamnet::Error) -> Self {
        use beamnet::Error::*;
        let msg = e.to_string().replace('\n', " ");
        match e {
            InvalidInput(_) | NotSpd { .. } | NotSkew { .. } | ProfileIncompatible { .. } | TraceDimensionMismatch(_) => {
                CliError::Validation(msg)
            }
            _ => CliError::Runtime(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
