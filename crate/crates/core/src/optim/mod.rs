//! Threshold search: exhaustive, stepwise aggregation and splitting,
//! differential evolution, and the Bray–Curtis aggregation baseline.

mod de;
mod exhaustive;
mod paa;
mod stepwise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{evaluate_loss, Cohort, LossKind, LossSpec};
use crate::thresholds::ThresholdSet;

pub use de::{differential_evolution, DeConfig, Strategy};
pub use exhaustive::{exhaustive_search, DEFAULT_BUDGET};
pub use paa::paa_baseline;
pub use stepwise::{stepwise_aggregation, stepwise_splitting};

/// Relative tolerance under which two losses count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Search algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    #[serde(rename = "sa", alias = "stepwise_aggregation")]
    StepwiseAggregation,
    #[serde(rename = "ss", alias = "stepwise_splitting")]
    StepwiseSplitting,
    #[serde(rename = "de", alias = "differential_evolution")]
    DifferentialEvolution,
    Paa,
}

impl Method {
    pub fn short_name(&self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::StepwiseAggregation => "sa",
            Method::StepwiseSplitting => "ss",
            Method::DifferentialEvolution => "de",
            Method::Paa => "paa",
        }
    }

    /// Whether the method searches the shared histogram cutoffs.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, Method::DifferentialEvolution)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exhaustive" => Ok(Method::Exhaustive),
            "sa" | "stepwise_aggregation" => Ok(Method::StepwiseAggregation),
            "ss" | "stepwise_splitting" => Ok(Method::StepwiseSplitting),
            "de" | "differential_evolution" => Ok(Method::DifferentialEvolution),
            "paa" => Ok(Method::Paa),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Best loss after an iteration (a removal, an addition, or a generation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub thresholds: ThresholdSet,
    pub loss: f64,
    pub loss_kind: LossKind,
    pub method: Method,
    pub evaluations: u64,
    pub trace: Vec<TracePoint>,
    /// Thresholds rounded up to integers, set for integer-valued cohorts.
    pub rounded_up: Option<Vec<f64>>,
}

impl OptimizationResult {
    pub(crate) fn certify(
        cohort: &Cohort,
        thresholds: ThresholdSet,
        spec: &LossSpec,
        method: Method,
        evaluations: u64,
        trace: Vec<TracePoint>,
    ) -> Result<Self> {
        let loss = evaluate_loss(cohort, &thresholds, spec)?;
        let rounded_up = cohort.is_integer_valued().then(|| thresholds.rounded_up());
        Ok(Self {
            thresholds,
            loss,
            loss_kind: spec.kind,
            method,
            evaluations,
            trace,
            rounded_up,
        })
    }
}

/// Settings shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Largest number of subsets exhaustive search agrees to scan.
    pub exhaustive_budget: u128,
    pub de: DeConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            exhaustive_budget: DEFAULT_BUDGET,
            de: DeConfig::default(),
        }
    }
}

/// Candidate cutoffs and fixed positions for a discrete search.
pub(crate) struct DiscreteProblem<'a> {
    pub cutoffs: &'a [f64],
    pub fixed: Vec<usize>,
}

impl<'a> DiscreteProblem<'a> {
    pub(crate) fn new(cohort: &'a Cohort, k: usize, fixed: &ThresholdSet) -> Result<Self> {
        let cutoffs = cohort.shared_cutoffs().ok_or_else(|| {
            Error::Incompatible("discrete search needs histograms on shared cutoffs".into())
        })?;
        if k > cutoffs.len() {
            return Err(Error::TooManyThresholds {
                k,
                available: cutoffs.len(),
            });
        }
        if fixed.len() > k {
            return Err(Error::InvalidThresholds(format!(
                "{} fixed thresholds exceed K = {k}",
                fixed.len()
            )));
        }
        let fixed = fixed
            .values()
            .iter()
            .map(|&x| {
                cutoffs
                    .iter()
                    .position(|&c| c == x)
                    .ok_or(Error::NotACutoff(x))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cutoffs, fixed })
    }

    pub(crate) fn is_fixed(&self, j: usize) -> bool {
        self.fixed.contains(&j)
    }

    pub(crate) fn values(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&j| self.cutoffs[j]).collect()
    }
}

/// `a < b` beyond the tie tolerance relative to `b`.
pub(crate) fn improves(a: f64, b: f64) -> bool {
    a < b - TIE_TOLERANCE * b.abs()
}

/// Runs `method` with every value of `fixed` pinned in the answer.
pub fn optimize(
    cohort: &Cohort,
    k: usize,
    spec: &LossSpec,
    method: Method,
    fixed: &ThresholdSet,
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    fixed.validate_for(&cohort.domain())?;
    if fixed.len() > k {
        return Err(Error::InvalidThresholds(format!(
            "{} fixed thresholds exceed K = {k}",
            fixed.len()
        )));
    }
    if method == Method::Paa && spec.kind != LossKind::L2BrayCurtis {
        return Err(Error::Incompatible(format!(
            "PAA optimizes the Bray–Curtis objective, not {}",
            spec.kind
        )));
    }
    if method.is_discrete() {
        DiscreteProblem::new(cohort, k, fixed)?;
    }
    if fixed.len() == k {
        let t = ThresholdSet::with_fixed(fixed.values().to_vec(), fixed.values().to_vec())?;
        return OptimizationResult::certify(cohort, t, spec, method, 1, Vec::new());
    }
    match method {
        Method::Exhaustive => exhaustive_search(cohort, k, spec, fixed, config.exhaustive_budget),
        Method::StepwiseAggregation => stepwise_aggregation(cohort, k, spec, fixed),
        Method::StepwiseSplitting => stepwise_splitting(cohort, k, spec, fixed),
        Method::DifferentialEvolution => differential_evolution(cohort, k, spec, fixed, &config.de),
        Method::Paa => paa_baseline(cohort, k, fixed),
    }
}
