//! Data-driven threshold selection for bounded one-dimensional distributions.
//!
//! Thresholds summarize a histogram or a raw sample by the proportions of
//! mass between consecutive cut points. This crate scores a threshold set by
//! how well it preserves each distribution ([`LossKind::L1`]) or the pairwise
//! 2-Wasserstein distances within a cohort ([`LossKind::L2`]), and searches
//! for good sets with exhaustive, greedy, and evolutionary optimizers.
//!
//! Supporting modules simulate benchmark cohorts, ingest CGM-style CSV data,
//! and evaluate threshold sets through time-in-range summaries and univariate
//! logistic classifiers.

pub mod error;
pub mod evaluation;
pub mod histogram;
pub mod ingest;
pub mod loss;
pub mod optim;
pub mod quantile;
pub mod simulation;
pub mod thresholds;

pub use error::{Error, Result};
pub use histogram::{Anchor, Domain, EmpiricalSample, Histogram, Member, MemberKind, QuantileSource};
pub use loss::{
    bray_curtis, evaluate_loss, loss_l1, loss_l2, loss_l2_braycurtis, wasserstein_sq, Cohort,
    LossKind, LossSpec,
};
pub use optim::{optimize, Method, OptimizationResult};
pub use quantile::{linearized_quantile_grid, quantile_grid, QuantileGrid, DEFAULT_GRID_SIZE};
pub use thresholds::ThresholdSet;
