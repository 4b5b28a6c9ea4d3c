//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by construction, optimization, ingestion and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain [{lower}, {upper}]: lower bound must be finite and below the upper bound")]
    InvalidDomain { lower: f64, upper: f64 },

    #[error("invalid cutoffs: {0}")]
    InvalidCutoffs(String),

    #[error("invalid masses: {0}")]
    InvalidMasses(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("value {value} lies outside the domain [{lower}, {upper}]")]
    OutOfDomain { value: f64, lower: f64, upper: f64 },

    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("grid size must be at least 1")]
    InvalidGridSize,

    #[error("grid sizes differ: {left} vs {right}")]
    GridSizeMismatch { left: usize, right: usize },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("threshold {0} is not one of the histogram cutoffs")]
    NotACutoff(f64),

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("need at least {need} cohort members, got {got}")]
    TooFewMembers { need: usize, got: usize },

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("search space of {size} combinations exceeds the budget of {budget}")]
    BudgetExceeded { size: u128, budget: u128 },

    #[error("cannot select {k} thresholds from {available} candidate cutoffs")]
    TooManyThresholds { k: usize, available: usize },

    #[error("no feasible solution: {0}")]
    Infeasible(String),

    #[error("incompatible method and loss: {0}")]
    Incompatible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid classifier input: {0}")]
    InvalidLabels(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
