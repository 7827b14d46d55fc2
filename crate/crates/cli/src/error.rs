use std::path::Path;

use posekit::schema::SchemaError;
use posekit::PoseError;

/// Failure classes with fixed exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input or invalid configuration (exit 2).
    Schema(String),
    /// Missing or unwritable file (exit 3).
    Io(String),
    /// Numerical or algorithmic failure (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn schema(path: &Path, err: SchemaError) -> Self {
        CliError::Schema(format!("{}: {err}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<PoseError> for CliError {
    fn from(e: PoseError) -> Self {
        match e {
            PoseError::InvalidParameter(_) | PoseError::InvalidSpec(_) | PoseError::Malformed(_) => {
                CliError::Schema(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
