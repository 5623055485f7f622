use obfuskit_core::ObfuscationError;
use thiserror::Error;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Infeasible = 1,
    Domain = 2,
    Parse = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Domain(#[from] ObfuscationError),

    #[error("pair {pair} needs {needs}")]
    PairUnavailable { pair: String, needs: &'static str },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Usage(_) => ExitCode::Parse,
            CliError::Domain(ObfuscationError::InfeasibleInstance) => ExitCode::Infeasible,
            CliError::Domain(_) | CliError::PairUnavailable { .. } => ExitCode::Domain,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
