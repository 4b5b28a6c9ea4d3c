//! Failure categories and their process exit codes.

use std::path::PathBuf;

use optithresh_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration; `field` names the offending setting.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Sorts a core error into a category; `field` is used when it is a configuration problem.
    pub fn from_core(field: &str, e: CoreError) -> Self {
        use CoreError::*;
        match e {
            InvalidDomain { .. }
            | InvalidProbability(_)
            | InvalidGridSize
            | GridSizeMismatch { .. }
            | InvalidThresholds(_)
            | NotACutoff(_)
            | Incompatible(_)
            | InvalidParameter(_) => CliError::config(field, e),
            BudgetExceeded { .. } | TooManyThresholds { .. } | Infeasible(_) => {
                CliError::Infeasible(e.to_string())
            }
            InvalidCutoffs(_)
            | InvalidMasses(_)
            | EmptySample
            | OutOfDomain { .. }
            | EmptyCohort
            | TooFewMembers { .. }
            | InvalidCohort(_)
            | LengthMismatch { .. }
            | MalformedRow { .. }
            | MissingColumn(_)
            | InvalidLabels(_)
            | Csv(_)
            | Io(_) => CliError::Data(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Output { .. } => 1,
        }
    }
}
