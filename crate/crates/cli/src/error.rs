use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, files or parameter ranges.
    #[error("{0}")]
    Invalid(String),
    /// A computation failed: singular data, integrator failure, no convergence.
    #[error("{0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn code(&self) -> ExitCode {
        match self {
            CliError::Invalid(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
            _ => ExitCode::from(1),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

pub fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

impl From<magswim::SwimmerError> for CliError {
    fn from(e: magswim::SwimmerError) -> Self {
        CliError::Invalid(e.to_string())
    }
}
