use thiserror::Error;

/// Process exit code for configuration problems (parse or validation).
pub const EXIT_CONFIG: i32 = 1;
/// Process exit code for runtime assertion failures inside the engine or
/// the audit suites.
pub const EXIT_ASSERTION: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Config file could not be parsed; carries the 1-based line number.
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Config parsed but failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A diagnostic suite observed a violated bound.
    #[error("audit failure: {0}")]
    Audit(String),

    #[error(transparent)]
    Core(#[from] fedsmd::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    /// Maps the error to the documented process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Audit(_) => EXIT_ASSERTION,
            CliError::Core(fedsmd::Error::AssertionFailed { .. }) => EXIT_ASSERTION,
            _ => EXIT_CONFIG,
        }
    }
}
