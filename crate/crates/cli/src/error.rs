use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments; exit 2.
    Config(String),
    /// An upstream artifact is absent or stale; exit 3.
    MissingArtifact {
        artifact: String,
        command: &'static str,
        detail: String,
    },
    /// Anything that fails while running; exit 4.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::MissingArtifact {
                artifact,
                command,
                detail,
            } => {
                write!(f, "{artifact}: {detail}; run `acam-drf {command}` first")
            }
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<acam_drf::Error> for CliError {
    fn from(e: acam_drf::Error) -> Self {
        match e {
            acam_drf::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
