use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Training(String),
    /// Artifacts were written but a checked invariant failed.
    Invariant(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) | CliError::Other(_) => EXIT_RUNTIME,
            CliError::Training(_) => EXIT_TRAINING,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Training(m) => write!(f, "training failed: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<qscorer_core::error::Error> for CliError {
    fn from(e: qscorer_core::error::Error) -> Self {
        use qscorer_core::error::Error as E;
        match e {
            E::Training { .. } => CliError::Training(e.to_string()),
            E::Io(_) | E::Parse { .. } => CliError::Io(e.to_string()),
            E::Domain(_) | E::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.into())
    }
}
