use std::fmt;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, files, columns or values. Exit code 1.
    Input(String),
    /// A model could not be fitted or an estimand is undefined. Exit code 2.
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Estimation(_) => 2,
        }
    }

    /// Classifies a library error raised while estimating.
    pub fn from_core(context: &str, e: causal_surv::Error) -> Self {
        match e {
            causal_surv::Error::InvalidInput(_) | causal_surv::Error::DimensionMismatch { .. } => {
                CliError::Input(format!("{context}: {e}"))
            }
            _ => CliError::Estimation(format!("{context}: {e}")),
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Estimation(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
