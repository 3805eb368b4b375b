use thiserror::Error;

/// CLI failure with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, flag or input data (exit 2).
    #[error("{0}")]
    Validation(String),
    /// Some PSRF exceeded the gate (exit 3).
    #[error("{0}")]
    Gate(String),
    /// Anything else, e.g. I/O or sampler failure (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Gate(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<rbcopula::Error> for CliError {
    fn from(e: rbcopula::Error) -> Self {
        match e {
            rbcopula::Error::Invalid(_) | rbcopula::Error::Domain(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Wraps an I/O error with the path it concerns.
pub fn io_at(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}
