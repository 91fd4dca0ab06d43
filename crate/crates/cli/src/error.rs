use std::fmt;
use std::process::ExitCode;

/// Failure classes with stable exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// Local environment: ports, files that cannot be written.
    Environment,
    /// Bad flags, config, scripts or payloads.
    Input,
    /// Broker unreachable or lost.
    Connectivity,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Environment => 2,
            Failure::Input => 3,
            Failure::Connectivity => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub message: String,
}

impl CliError {
    pub fn env(message: impl fmt::Display) -> Self {
        Self {
            failure: Failure::Environment,
            message: message.to_string(),
        }
    }

    pub fn input(message: impl fmt::Display) -> Self {
        Self {
            failure: Failure::Input,
            message: message.to_string(),
        }
    }

    pub fn connectivity(message: impl fmt::Display) -> Self {
        Self {
            failure: Failure::Connectivity,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.failure.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<xri_runtime::RuntimeError> for CliError {
    fn from(e: xri_runtime::RuntimeError) -> Self {
        use xri_runtime::RuntimeError as R;
        match e {
            R::Config(_) => CliError::input(e),
            R::Trace(_) | R::Join(_) => CliError::env(e),
            R::Client(_) | R::Idle(_) => CliError::connectivity(e),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
