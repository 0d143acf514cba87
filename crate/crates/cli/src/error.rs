use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fpk_core::Error),
    #[error("malformed snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    TomlOut(#[from] toml::ser::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2: configuration or validation; 3: numerical failure; 4: IO.
    pub fn exit_code(&self) -> u8 {
        use fpk_core::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::StepFailed { .. }
                | E::SolverDiverged { .. }
                | E::NonFiniteField(_)
                | E::NonFiniteCoefficient { .. }
                | E::ParticleEscaped { .. } => 3,
                _ => 2,
            },
            CliError::Io { .. } | CliError::Snapshot { .. } | CliError::Json(_) | CliError::Csv(_) | CliError::TomlOut(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
