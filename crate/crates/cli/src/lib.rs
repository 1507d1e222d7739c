//! Experiment runner: config-driven dataset generation, corruption,
//! EM training, evaluation, and artifact emission.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;
pub mod pgm;

use std::process::ExitCode;

use thiserror::Error;

/// Exit codes: 0 success, 2 config error, 3 I/O error, 4 numerical
/// divergence, 1 anything else.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] emdm::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn stage(stage: &'static str, source: impl Into<CliError>) -> Self {
        CliError::Stage {
            stage,
            source: Box::new(source.into()),
        }
    }

    pub fn exit_code_u8(&self) -> u8 {
        fn leaf(e: &CliError) -> u8 {
            match e {
                CliError::Config(_) => 2,
                CliError::Io(_) => 3,
                CliError::Core(core) => match core {
                    emdm::Error::Divergence { .. } | emdm::Error::TrainingDiverged { .. } => 4,
                    emdm::Error::Io(_) => 3,
                    emdm::Error::Measurement { source, .. } => leaf(&CliError::Core(clone_kind(source))),
                    emdm::Error::EmIteration { source, .. } => leaf(&CliError::Core(clone_kind(source))),
                    _ => 1,
                },
                CliError::Stage { source, .. } => leaf(source),
                CliError::Other(_) => 1,
            }
        }
        leaf(self)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit_code_u8())
    }
}

/// Reduce a nested core error to a shallow one carrying the same exit
/// semantics (core errors are not `Clone`).
fn clone_kind(e: &emdm::Error) -> emdm::Error {
    match e {
        emdm::Error::Divergence { step, what } => emdm::Error::Divergence {
            step: *step,
            what: what.clone(),
        },
        emdm::Error::TrainingDiverged { step } => emdm::Error::TrainingDiverged { step: *step },
        emdm::Error::Io(_) => emdm::Error::Io(std::io::Error::other("nested I/O failure")),
        emdm::Error::Measurement { source, .. } | emdm::Error::EmIteration { source, .. } => {
            clone_kind(source)
        }
        _ => emdm::Error::InvalidArgument("nested".to_string()),
    }
}

pub type CliResult<T> = Result<T, CliError>;
