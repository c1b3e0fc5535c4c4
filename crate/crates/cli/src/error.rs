use sobolev_lab::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Lab(#[from] LabError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Lab(e) => match e {
                LabError::Dimension { .. }
                | LabError::InvalidParameter(_)
                | LabError::Resolution(_)
                | LabError::Parse(_)
                | LabError::Json(_) => 2,
                _ => 3,
            },
        }
    }
}
