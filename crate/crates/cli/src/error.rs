use std::fmt;
use std::path::PathBuf;

use peg_core::Error as CoreError;

use crate::formats::FormatError;

/// Exit code for a successful run.
pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;
pub const EXIT_DATA: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(CoreError),
    /// A domain failure reported after partial results were written.
    Failed(String),
    /// A malformed or inconsistent input file.
    Data { path: PathBuf, error: FormatError },
    Io { path: PathBuf, error: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => core_exit_code(e),
            CliError::Failed(_) => EXIT_DOMAIN,
            CliError::Data { .. } => EXIT_DATA,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn data(path: impl Into<PathBuf>, error: FormatError) -> Self {
        CliError::Data { path: path.into(), error }
    }

    pub fn io(path: impl Into<PathBuf>, error: std::io::Error) -> Self {
        CliError::Io { path: path.into(), error }
    }
}

/// Limits and search failures map to 3; bad inputs to 4.
pub fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InvalidConfig(_) => EXIT_USAGE,
        CoreError::Unsolvable
        | CoreError::NoCompleteExplanation
        | CoreError::LatticeTooLarge { .. }
        | CoreError::Diverged { .. }
        | CoreError::UnsolvableScenario(_)
        | CoreError::GenerationExhausted { .. } => EXIT_DOMAIN,
        CoreError::InapplicableChange(_)
        | CoreError::InvalidModel(_)
        | CoreError::RobotPlanNotOptimal { .. }
        | CoreError::UnknownContingency(_)
        | CoreError::LengthMismatch { .. }
        | CoreError::InvalidTrace { .. }
        | CoreError::InvalidScenario(_) => EXIT_DATA,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Failed(msg) => write!(f, "{msg}"),
            CliError::Data { path, error } => write!(f, "{}: {error}", path.display()),
            CliError::Io { path, error } => write!(f, "{}: {error}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
