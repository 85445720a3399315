use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lapmc::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    /// 0 for help/version output, 2 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Clap(e) if !e.use_stderr() => ExitCode::SUCCESS,
            CliError::Core(e) if e.is_numeric() => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
