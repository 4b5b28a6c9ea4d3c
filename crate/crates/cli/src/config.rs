//! Run configurations: JSON documents layered over defaults, then flags.

use std::path::{Path, PathBuf};

use optithresh_core::evaluation::NamedThresholds;
use optithresh_core::ingest::{CsvSchema, InclusionPolicy, ReadOptions};
use optithresh_core::optim::OptimizerConfig;
use optithresh_core::simulation::{MixtureSpec, TwoPopulationSpec};
use optithresh_core::{LossKind, Method, ThresholdSet, DEFAULT_GRID_SIZE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// How cohort members are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Histograms for CSV input and for the discrete methods, raw samples otherwise.
    #[default]
    Auto,
    Histogram,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvInput {
    pub path: PathBuf,
    pub schema: CsvSchema,
    pub skip_malformed: bool,
    pub expected_interval: f64,
    pub representation: Representation,
    /// `null` keeps every subject.
    pub inclusion: Option<InclusionPolicy>,
    /// Label values of group A and group B (evaluate only); by default the
    /// two distinct labels in sorted order.
    pub groups: Option<(String, String)>,
}

impl Default for CsvInput {
    fn default() -> Self {
        let opts = ReadOptions::default();
        Self {
            path: PathBuf::new(),
            schema: opts.schema,
            skip_malformed: opts.skip_malformed,
            expected_interval: opts.expected_interval,
            representation: Representation::Auto,
            inclusion: Some(InclusionPolicy::default()),
            groups: None,
        }
    }
}

impl CsvInput {
    pub fn from_path(path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            ..Self::default()
        }
    }

    pub fn read_options(&self) -> ReadOptions {
        ReadOptions {
            schema: self.schema.clone(),
            skip_malformed: self.skip_malformed,
            expected_interval: self.expected_interval,
        }
    }

    fn validate(&self, field: &str) -> CliResult<()> {
        if self.path.as_os_str().is_empty() {
            return Err(CliError::config(format!("{field}.path"), "no input file given"));
        }
        if !(self.expected_interval > 0.0 && self.expected_interval.is_finite()) {
            return Err(CliError::config(
                format!("{field}.expected_interval"),
                "must be a positive number of seconds",
            ));
        }
        if let Some(p) = &self.inclusion {
            p.validate()
                .map_err(|e| CliError::config(format!("{field}.inclusion"), e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationInput {
    pub mixture: MixtureSpec,
    pub representation: Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Csv(CsvInput),
    Simulation(SimulationInput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub input: Option<InputSpec>,
    pub loss: LossKind,
    pub grid_size: usize,
    pub method: Method,
    pub k: usize,
    /// Thresholds that must appear in the answer.
    pub fixed: Vec<f64>,
    /// Seeds the simulated cohort (if any) and differential evolution.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            input: None,
            loss: LossKind::L1,
            grid_size: DEFAULT_GRID_SIZE,
            method: Method::DifferentialEvolution,
            k: 3,
            fixed: Vec::new(),
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

fn check_search(
    prefix: &str,
    loss: LossKind,
    method: Method,
    k: usize,
    fixed: &[f64],
) -> CliResult<ThresholdSet> {
    let field = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        }
    };
    if k == 0 {
        return Err(CliError::config(field("k"), "must be at least 1"));
    }
    if (method == Method::Paa) != (loss == LossKind::L2BrayCurtis) {
        return Err(CliError::config(
            field("method"),
            if method == Method::Paa {
                "paa requires the bray-curtis loss; Wasserstein losses are not supported".to_string()
            } else {
                format!("{method} requires an l1 or l2 loss")
            },
        ));
    }
    let mut sorted = fixed.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fixed = ThresholdSet::new(sorted).map_err(|e| CliError::config(field("fixed"), e))?;
    if fixed.len() > k {
        return Err(CliError::config(
            field("fixed"),
            format!("{} fixed thresholds exceed k = {k}", fixed.len()),
        ));
    }
    Ok(fixed)
}

impl OptimizeConfig {
    /// Checks everything that can be checked before touching data; returns the fixed set.
    pub fn validate(&self) -> CliResult<ThresholdSet> {
        let fixed = check_search("", self.loss, self.method, self.k, &self.fixed)?;
        if self.grid_size == 0 {
            return Err(CliError::config("grid_size", "must be at least 1"));
        }
        self.optimizer
            .de
            .validate()
            .map_err(|e| CliError::config("optimizer.de", e))?;
        match &self.input {
            None => {
                return Err(CliError::config(
                    "input",
                    "no input; pass --input or set `input` in the config",
                ))
            }
            Some(InputSpec::Csv(c)) => {
                c.validate("input.csv")?;
                if c.groups.is_some() {
                    return Err(CliError::config("input.csv.groups", "only used by evaluate"));
                }
            }
            Some(InputSpec::Simulation(s)) => s
                .mixture
                .validate()
                .map_err(|e| CliError::config("input.simulation.mixture", e))?,
        }
        Ok(fixed)
    }
}

/// A data-driven set to optimize on the combined cohort and add to the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateSpec {
    pub name: String,
    pub method: Method,
    pub loss: LossKind,
    pub k: usize,
    pub fixed: Vec<f64>,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        Self {
            name: "data-driven".into(),
            method: Method::DifferentialEvolution,
            loss: LossKind::L2,
            k: 2,
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluateInput {
    /// One file whose label column splits subjects into two groups.
    Csv(CsvInput),
    /// Narrow and wide simulated groups.
    Synthetic(TwoPopulationSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub input: Option<EvaluateInput>,
    pub threshold_sets: Vec<NamedThresholds>,
    /// Name of the set reductions are measured against; the first set by default.
    pub reference: Option<String>,
    pub candidate: Option<CandidateSpec>,
    pub grid_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            input: None,
            threshold_sets: vec![NamedThresholds {
                name: "consensus".into(),
                thresholds: ThresholdSet::new(vec![70.0, 181.0]).expect("increasing"),
            }],
            reference: None,
            candidate: Some(CandidateSpec::default()),
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl EvaluateConfig {
    /// Validates and returns the reference index and the candidate's fixed set.
    pub fn validate(&self) -> CliResult<(usize, Option<ThresholdSet>)> {
        if self.grid_size == 0 {
            return Err(CliError::config("grid_size", "must be at least 1"));
        }
        self.optimizer
            .de
            .validate()
            .map_err(|e| CliError::config("optimizer.de", e))?;
        let mut names: Vec<&str> = self.threshold_sets.iter().map(|s| s.name.as_str()).collect();
        let fixed = match &self.candidate {
            Some(c) => {
                names.push(&c.name);
                Some(check_search("candidate", c.loss, c.method, c.k, &c.fixed)?)
            }
            None => None,
        };
        if names.is_empty() {
            return Err(CliError::config("threshold_sets", "nothing to evaluate"));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(CliError::config("threshold_sets", format!("duplicate set name `{n}`")));
            }
        }
        let reference = match &self.reference {
            None => 0,
            Some(r) => names.iter().position(|n| n == r).ok_or_else(|| {
                CliError::config("reference", format!("no threshold set named `{r}`"))
            })?,
        };
        match &self.input {
            None => {
                return Err(CliError::config(
                    "input",
                    "no input; pass --input or --synthetic, or set `input` in the config",
                ))
            }
            Some(EvaluateInput::Csv(c)) => {
                c.validate("input.csv")?;
                if c.schema.label.is_none() {
                    return Err(CliError::config(
                        "input.csv.schema.label",
                        "evaluate needs a label column to split subjects into two groups",
                    ));
                }
                if c.representation == Representation::Sample
                    && self.candidate.as_ref().is_some_and(|c| c.method.is_discrete())
                {
                    return Err(CliError::config(
                        "input.csv.representation",
                        "discrete methods need histogram input",
                    ));
                }
            }
            Some(EvaluateInput::Synthetic(s)) => {
                s.validate()
                    .map_err(|e| CliError::config("input.synthetic", e))?;
                if self.candidate.as_ref().is_some_and(|c| c.method.is_discrete()) {
                    return Err(CliError::config(
                        "candidate.method",
                        "synthetic groups are raw samples; use de",
                    ));
                }
            }
        }
        Ok((reference, fixed))
    }
}

/// Reads `path` as `T`, with every missing key taking its default. A
/// top-level `out` key is split off and returned separately.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<(T, Option<PathBuf>)> {
    let Some(path) = path else {
        return Ok((T::default(), None));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| CliError::config("--config", e))?;
    let out = match value.as_object_mut().and_then(|o| o.remove("out")) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(CliError::config("out", "expected a directory path")),
    };
    let config = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = match e.path().to_string() {
            p if p == "." => "config".to_string(),
            p => p,
        };
        CliError::config(field, e.inner())
    })?;
    Ok((config, out))
}
