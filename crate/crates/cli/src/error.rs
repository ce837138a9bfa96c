use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("{0}")]
    Usage(String),

    #[error("invariant failed: {0}")]
    InvariantFailed(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error(transparent)]
    Core(#[from] asyncbcd::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use asyncbcd::Error as E;
        match self {
            CliError::Schema { .. } | CliError::Infeasible(_) | CliError::Usage(_) => EXIT_INFEASIBLE,
            CliError::InvariantFailed(_) => EXIT_INVARIANT,
            CliError::Core(e) => match e {
                E::InvariantViolation(_) => EXIT_INVARIANT,
                E::InfeasibleStep(_)
                | E::InvalidArgument(_)
                | E::InvalidPartition(_)
                | E::InvalidWeights(_)
                | E::NonSymmetric(_)
                | E::NotPositiveSemidefinite(_)
                | E::DimensionMismatch { .. }
                | E::BlockOutOfRange { .. }
                | E::DivergentTail { .. }
                | E::Mismatch(_) => EXIT_INFEASIBLE,
                _ => EXIT_RUNTIME,
            },
            CliError::Missing(_) | CliError::Io { .. } | CliError::Json(_) => EXIT_RUNTIME,
        }
    }
}

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
