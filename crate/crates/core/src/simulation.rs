//! Synthetic cohorts from mixtures of uniforms with noisy breakpoints, and a
//! multi-method benchmark over them.
//!
//! Every subject draws from its own ChaCha stream (the cohort seed selects the
//! key, the subject index the stream), so a subject's data do not depend on
//! how many subjects are generated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{Domain, EmpiricalSample, Histogram, Member};
use crate::loss::{evaluate_loss, Cohort, LossKind, LossSpec};
use crate::optim::{optimize, Method, OptimizerConfig};
use crate::quantile::DEFAULT_GRID_SIZE;
use crate::thresholds::ThresholdSet;

/// How each subject's mixture weights are drawn (both assume three breakpoints).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `Dirichlet(20 * (0.3, 0.4, 0.2, 0.1))`.
    Setting1,
    /// `(w0, w1) = 0.7 * Dirichlet(2.5, 2.5)` and `(w2, w3) = (0.2, 0.1)`.
    Setting2,
}

impl WeightScheme {
    fn components(&self) -> usize {
        4
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            WeightScheme::Setting1 => {
                sample_dirichlet(&[6.0, 8.0, 4.0, 2.0], rng).expect("positive alpha")
            }
            WeightScheme::Setting2 => {
                let d = sample_dirichlet(&[2.5, 2.5], rng).expect("positive alpha");
                vec![0.7 * d[0], 0.7 * d[1], 0.2, 0.1]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub base_thresholds: Vec<f64>,
    pub domain: Domain,
    pub noise_sd: f64,
    pub noise_truncation: f64,
    pub weight_scheme: WeightScheme,
    pub n_subjects: usize,
    pub obs_per_subject: usize,
    /// Cutoffs for the binned cohort used by the discrete methods.
    pub histogram_cutoffs: Vec<f64>,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            base_thresholds: vec![70.0, 180.0, 250.0],
            domain: Domain::new(40.0, 400.0).expect("valid"),
            noise_sd: 0.0,
            noise_truncation: 30.0,
            weight_scheme: WeightScheme::Setting1,
            n_subjects: 200,
            obs_per_subject: 1000,
            histogram_cutoffs: (21..=199).map(|k| 2.0 * k as f64).collect(),
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let c = &self.base_thresholds;
        if c.len() + 1 != self.weight_scheme.components() {
            return bad(format!(
                "weight scheme has {} components but there are {} base thresholds",
                self.weight_scheme.components(),
                c.len()
            ));
        }
        ThresholdSet::new(c.clone())?.validate_for(&self.domain)?;
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be non-negative, got {}", self.noise_sd));
        }
        if !(self.noise_truncation > 0.0) {
            return bad("noise_truncation must be positive".into());
        }
        let min_gap = c
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if self.noise_truncation >= min_gap / 2.0 {
            return bad(format!(
                "noise_truncation {} would let thresholds cross (minimum gap {min_gap})",
                self.noise_truncation
            ));
        }
        let (lo, hi) = (self.domain.lower(), self.domain.upper());
        if c[0] - self.noise_truncation < lo || c[c.len() - 1] + self.noise_truncation > hi {
            return bad("noisy thresholds could leave the domain".into());
        }
        if self.n_subjects == 0 || self.obs_per_subject == 0 {
            return bad("n_subjects and obs_per_subject must be positive".into());
        }
        self.domain.check_cutoffs(&self.histogram_cutoffs)?;
        Ok(())
    }
}

/// A draw from `N(0, sd^2)` conditioned on `|x| <= bound`, by rejection.
pub fn sample_truncated_normal<R: Rng + ?Sized>(sd: f64, bound: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let x = sd * z;
        if x.abs() <= bound {
            return x;
        }
    }
}

/// Dirichlet draw via normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidParameter("empty Dirichlet parameter".into()));
    }
    let mut g = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let dist = Gamma::new(a, 1.0)
            .map_err(|_| Error::InvalidParameter(format!("Dirichlet alpha {a} must be positive")))?;
        g.push(dist.sample(rng));
    }
    let s: f64 = g.iter().sum();
    if !(s > 0.0) {
        // every gamma draw underflowed; only possible for tiny alphas
        let i = rng.random_range(0..g.len());
        return Ok((0..g.len()).map(|k| if k == i { 1.0 } else { 0.0 }).collect());
    }
    Ok(g.into_iter().map(|x| x / s).collect())
}

/// One simulated cohort in both representations.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    /// Raw draws, for the oracle and differential evolution.
    pub empirical: Cohort,
    /// The same draws binned on the spec's histogram cutoffs.
    pub binned: Cohort,
    /// Per-subject noisy breakpoints.
    pub breakpoints: Vec<Vec<f64>>,
    /// Per-subject mixture weights.
    pub weights: Vec<Vec<f64>>,
}

struct Subject {
    values: Vec<f64>,
    breakpoints: Vec<f64>,
    weights: Vec<f64>,
}

fn subject(spec: &MixtureSpec, seed: u64, index: usize) -> Subject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let breakpoints: Vec<f64> = spec
        .base_thresholds
        .iter()
        .map(|&c| c + sample_truncated_normal(spec.noise_sd, spec.noise_truncation, &mut rng))
        .collect();
    let weights = spec.weight_scheme.draw(&mut rng);
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(spec.domain.lower());
    edges.extend_from_slice(&breakpoints);
    edges.push(spec.domain.upper());
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cum.push(acc);
    }
    let values = (0..spec.obs_per_subject)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let j = cum.partition_point(|&c| c <= u).min(weights.len() - 1);
            let (lo, hi) = (edges[j], edges[j + 1]);
            lo + rng.random::<f64>() * (hi - lo)
        })
        .collect();
    Subject {
        values,
        breakpoints,
        weights,
    }
}

/// Draws a cohort; the same `(spec, seed)` always gives the same cohort.
pub fn generate_cohort(spec: &MixtureSpec, seed: u64) -> Result<SimulatedCohort> {
    generate_cohort_with_grid(spec, seed, DEFAULT_GRID_SIZE)
}

pub fn generate_cohort_with_grid(
    spec: &MixtureSpec,
    seed: u64,
    grid_size: usize,
) -> Result<SimulatedCohort> {
    spec.validate()?;
    let subjects: Vec<Subject> = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| subject(spec, seed, i))
        .collect();
    let mut samples = Vec::with_capacity(subjects.len());
    let mut hists = Vec::with_capacity(subjects.len());
    let mut breakpoints = Vec::with_capacity(subjects.len());
    let mut weights = Vec::with_capacity(subjects.len());
    for (i, s) in subjects.into_iter().enumerate() {
        let sample = EmpiricalSample::new(spec.domain, s.values, Some(format!("sim{i}")))?;
        hists.push(Member::Histogram(Histogram::from_sample(
            &sample,
            spec.histogram_cutoffs.clone(),
        )?));
        samples.push(Member::Sample(sample));
        breakpoints.push(s.breakpoints);
        weights.push(s.weights);
    }
    Ok(SimulatedCohort {
        empirical: Cohort::with_grid(samples, grid_size)?,
        binned: Cohort::with_grid(hists, grid_size)?,
        breakpoints,
        weights,
    })
}

/// Two CGM-like groups: readings of group A stay close to a per-subject
/// centre, readings of group B spread widely around the same kind of centre.
/// Values are rounded to integers and clamped to `[40, 400]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPopulationSpec {
    pub n_per_group: usize,
    pub obs_per_subject: usize,
    /// Subject centres are uniform on this interval.
    pub centre_range: (f64, f64),
    pub narrow_sd: f64,
    pub wide_sd: f64,
}

impl Default for TwoPopulationSpec {
    fn default() -> Self {
        Self {
            n_per_group: 50,
            obs_per_subject: 500,
            centre_range: (125.0, 135.0),
            narrow_sd: 10.0,
            wide_sd: 60.0,
        }
    }
}

impl TwoPopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.centre_range;
        if self.n_per_group == 0 || self.obs_per_subject == 0 {
            return Err(Error::InvalidParameter(
                "n_per_group and obs_per_subject must be positive".into(),
            ));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("centre_range ({lo}, {hi}) is not an interval")));
        }
        if !(self.narrow_sd >= 0.0 && self.wide_sd >= 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Group A (narrow) and group B (wide) as raw samples on the CGM domain.
pub fn generate_two_populations(spec: &TwoPopulationSpec, seed: u64) -> Result<(Cohort, Cohort)> {
    spec.validate()?;
    let domain = Domain::cgm();
    let draw = |index: usize, sd: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let (lo, hi) = spec.centre_range;
        let centre = if hi > lo { rng.random_range(lo..hi) } else { lo };
        (0..spec.obs_per_subject)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (centre + sd * z).round().clamp(40.0, 400.0)
            })
            .collect::<Vec<f64>>()
    };
    let n = spec.n_per_group;
    let group = |offset: usize, sd: f64, tag: &str| -> Result<Cohort> {
        let members = (0..n)
            .into_par_iter()
            .map(|i| draw(offset + i, sd))
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, v)| EmpiricalSample::new(domain, v, Some(format!("{tag}{i}"))).map(Member::Sample))
            .collect::<Result<Vec<_>>>()?;
        Cohort::new(members)
    };
    Ok((group(0, spec.narrow_sd, "narrow")?, group(n, spec.wide_sd, "wide")?))
}

/// A row label in the benchmark: the oracle or an optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkMethod {
    Oracle,
    Exhaustive,
    Sa,
    Ss,
    De,
    Paa,
}

impl BenchmarkMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkMethod::Oracle => "oracle",
            BenchmarkMethod::Exhaustive => "exhaustive",
            BenchmarkMethod::Sa => "sa",
            BenchmarkMethod::Ss => "ss",
            BenchmarkMethod::De => "de",
            BenchmarkMethod::Paa => "paa",
        }
    }

    fn optimizer(&self) -> Option<Method> {
        match self {
            BenchmarkMethod::Oracle => None,
            BenchmarkMethod::Exhaustive => Some(Method::Exhaustive),
            BenchmarkMethod::Sa => Some(Method::StepwiseAggregation),
            BenchmarkMethod::Ss => Some(Method::StepwiseSplitting),
            BenchmarkMethod::De => Some(Method::DifferentialEvolution),
            BenchmarkMethod::Paa => Some(Method::Paa),
        }
    }

    /// PAA pairs only with Bray–Curtis; everything else only with Wasserstein losses.
    pub fn accepts(&self, loss: LossKind) -> bool {
        (*self == BenchmarkMethod::Paa) == (loss == LossKind::L2BrayCurtis)
    }

    /// Whether the method runs on the raw draws rather than the binned cohort.
    fn uses_empirical(&self) -> bool {
        matches!(self, BenchmarkMethod::Oracle | BenchmarkMethod::De)
    }
}

impl std::str::FromStr for BenchmarkMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(BenchmarkMethod::Oracle),
            "exhaustive" => Ok(BenchmarkMethod::Exhaustive),
            "sa" => Ok(BenchmarkMethod::Sa),
            "ss" => Ok(BenchmarkMethod::Ss),
            "de" => Ok(BenchmarkMethod::De),
            "paa" => Ok(BenchmarkMethod::Paa),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for BenchmarkMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub spec: MixtureSpec,
    /// One block of rows per noise level; overrides `spec.noise_sd`.
    pub noise_levels: Vec<f64>,
    pub methods: Vec<BenchmarkMethod>,
    pub losses: Vec<LossKind>,
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            spec: MixtureSpec::default(),
            noise_levels: vec![0.0],
            methods: vec![
                BenchmarkMethod::Oracle,
                BenchmarkMethod::De,
                BenchmarkMethod::Sa,
                BenchmarkMethod::Ss,
            ],
            losses: vec![LossKind::L1],
            k: 3,
            reps: 10,
            seed: 0,
            grid_size: DEFAULT_GRID_SIZE,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    /// The `(method, loss)` pairs that will run, in report order.
    pub fn pairs(&self) -> Result<Vec<(BenchmarkMethod, LossKind)>> {
        let mut out = Vec::new();
        for &m in &self.methods {
            let ok: Vec<_> = self.losses.iter().filter(|l| m.accepts(**l)).collect();
            if ok.is_empty() {
                return Err(Error::Incompatible(if m == BenchmarkMethod::Paa {
                    "PAA requires the bray-curtis loss; Wasserstein losses are not supported".into()
                } else {
                    format!("{m} requires an l1 or l2 loss")
                }));
            }
            out.extend(ok.into_iter().map(|&l| (m, l)));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::InvalidParameter("no noise levels".into()));
        }
        if self.grid_size == 0 {
            return Err(Error::InvalidGridSize);
        }
        for &nu in &self.noise_levels {
            MixtureSpec {
                noise_sd: nu,
                ..self.spec.clone()
            }
            .validate()?;
        }
        if self.methods.contains(&BenchmarkMethod::Oracle) && self.k > self.spec.base_thresholds.len() {
            return Err(Error::InvalidParameter(format!(
                "the oracle has only {} thresholds but K = {}",
                self.spec.base_thresholds.len(),
                self.k
            )));
        }
        self.optimizer.de.validate()?;
        self.pairs().map(|_| ())
    }

    /// Seed of replication `rep` at noise level index `level`.
    pub fn replication_seed(&self, level: usize, rep: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(((level as u64) << 32) | rep as u64))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub noise_sd: f64,
    pub rep: usize,
    pub seed: u64,
    pub method: BenchmarkMethod,
    pub loss_kind: LossKind,
    pub thresholds: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub noise_sd: f64,
    pub method: BenchmarkMethod,
    pub loss_kind: LossKind,
    pub mean_thresholds: Vec<f64>,
    /// Sample SD over replications divided by `sqrt(reps)`; absent when `reps = 1`.
    pub se_thresholds: Option<Vec<f64>>,
    pub mean_loss: f64,
    pub se_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
    pub replications: Vec<ReplicationRecord>,
}

impl BenchmarkReport {
    pub fn row(&self, noise_sd: f64, method: BenchmarkMethod, loss: LossKind) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .find(|r| r.noise_sd == noise_sd && r.method == method && r.loss_kind == loss)
    }

    /// Per-replication records of one method, in replication order.
    pub fn runs(
        &self,
        noise_sd: f64,
        method: BenchmarkMethod,
        loss: LossKind,
    ) -> impl Iterator<Item = &ReplicationRecord> {
        self.replications
            .iter()
            .filter(move |r| r.noise_sd == noise_sd && r.method == method && r.loss_kind == loss)
    }
}

fn mean_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt() / n.sqrt()))
}

fn run_one(
    config: &BenchmarkConfig,
    cohort: &SimulatedCohort,
    method: BenchmarkMethod,
    loss: LossKind,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let spec = LossSpec::new(loss, config.grid_size)?;
    let target = if method.uses_empirical() {
        &cohort.empirical
    } else {
        &cohort.binned
    };
    match method.optimizer() {
        None => {
            let t = ThresholdSet::new(config.spec.base_thresholds[..config.k].to_vec())?;
            Ok((t.values().to_vec(), evaluate_loss(target, &t, &spec)?))
        }
        Some(m) => {
            let mut opt = config.optimizer.clone();
            opt.de.seed = seed;
            let r = optimize(target, config.k, &spec, m, &ThresholdSet::empty(), &opt)?;
            Ok((r.thresholds.values().to_vec(), r.loss))
        }
    }
}

/// Runs every `(method, loss)` pair on fresh cohorts for each noise level and replication.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let pairs = config.pairs()?;
    let mut replications = Vec::new();
    let mut rows = Vec::new();
    for (level, &nu) in config.noise_levels.iter().enumerate() {
        let spec = MixtureSpec {
            noise_sd: nu,
            ..config.spec.clone()
        };
        let per_rep: Vec<Vec<ReplicationRecord>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = config.replication_seed(level, rep);
                let cohort = generate_cohort_with_grid(&spec, seed, config.grid_size)?;
                pairs
                    .iter()
                    .map(|&(method, loss_kind)| {
                        let (thresholds, loss) = run_one(config, &cohort, method, loss_kind, seed)?;
                        log::info!("noise {nu} rep {rep} {method}/{loss_kind}: {thresholds:?} loss {loss}");
                        Ok(ReplicationRecord {
                            noise_sd: nu,
                            rep,
                            seed,
                            method,
                            loss_kind,
                            thresholds,
                            loss,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let level_records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
        for &(method, loss_kind) in &pairs {
            let runs: Vec<&ReplicationRecord> = level_records
                .iter()
                .filter(|r| r.method == method && r.loss_kind == loss_kind)
                .collect();
            let k = runs[0].thresholds.len();
            let mut mean_thresholds = Vec::with_capacity(k);
            let mut se = Vec::with_capacity(k);
            for d in 0..k {
                let xs: Vec<f64> = runs.iter().map(|r| r.thresholds[d]).collect();
                let (m, s) = mean_se(&xs);
                mean_thresholds.push(m);
                se.push(s);
            }
            let losses: Vec<f64> = runs.iter().map(|r| r.loss).collect();
            let (mean_loss, se_loss) = mean_se(&losses);
            rows.push(BenchmarkRow {
                noise_sd: nu,
                method,
                loss_kind,
                mean_thresholds,
                se_thresholds: se.into_iter().collect(),
                mean_loss,
                se_loss,
            });
        }
        replications.extend(level_records);
    }
    Ok(BenchmarkReport {
        k: config.k,
        reps: config.reps,
        seed: config.seed,
        rows,
        replications,
    })
}
