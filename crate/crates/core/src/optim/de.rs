//! Differential evolution over the continuous relaxation `a < t_1 < ... < t_K < b`.
//!
//! Candidates live in the unit cube and are mapped onto the interior of the
//! domain, then sorted. A generation builds every trial vector first (one
//! sequential RNG stream) and scores them together, so results depend only on
//! the seed and never on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{improves, Method, OptimizationResult, TracePoint};
use crate::error::{Error, Result};
use crate::loss::{Cohort, LossSpec, Objective};
use crate::thresholds::ThresholdSet;

/// Mutation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `x_r0 + F (x_r1 - x_r2)` with binomial crossover.
    Rand1Bin,
    /// `x_best + F (x_r0 - x_r1)` with binomial crossover.
    Best1Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeConfig {
    pub population_size_per_dim: usize,
    /// The mutation factor is redrawn uniformly from this range every generation.
    pub mutation_range: (f64, f64),
    pub crossover_prob: f64,
    pub max_generations: usize,
    /// Stop once the population's loss SD is at most this fraction of its mean.
    pub convergence_tol: f64,
    pub seed: u64,
    pub strategy: Strategy,
    /// For histograms on shared cutoffs, finish with a local search over the cutoffs.
    pub polish: bool,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size_per_dim: 15,
            mutation_range: (0.5, 1.0),
            crossover_prob: 0.7,
            max_generations: 1000,
            convergence_tol: 0.01,
            seed: 0,
            strategy: Strategy::Rand1Bin,
            polish: true,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.population_size_per_dim < 4 {
            return bad("population_size_per_dim must be at least 4");
        }
        let (lo, hi) = self.mutation_range;
        if !(lo > 0.0 && lo <= hi && hi <= 2.0) {
            return bad("mutation_range must satisfy 0 < low <= high <= 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob must lie in [0, 1]");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        Ok(())
    }
}

struct Repair<'a> {
    lo: f64,
    span: f64,
    eps: f64,
    lower: f64,
    upper: f64,
    fixed: &'a [f64],
}

impl Repair<'_> {
    /// Maps a unit-cube vector to sorted, strictly increasing thresholds merged
    /// with the fixed ones; `None` if no valid repair exists.
    fn apply(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut v: Vec<(f64, bool)> = x
            .iter()
            .map(|&u| (self.lo + u * self.span, false))
            .chain(self.fixed.iter().map(|&f| (f, true)))
            .collect();
        // among equal values the fixed one comes first, so free ones move up
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        for k in 1..v.len() {
            if v[k].0 <= v[k - 1].0 {
                if v[k].1 {
                    return None;
                }
                v[k].0 = v[k - 1].0 + self.eps;
            }
        }
        let t: Vec<f64> = v.into_iter().map(|p| p.0).collect();
        let ok = t.first().is_none_or(|&f| f > self.lower) && t.last().is_none_or(|&l| l < self.upper);
        ok.then_some(t)
    }
}

/// Best-found thresholds for the continuous problem; `fixed` is kept as is.
pub fn differential_evolution(
    cohort: &Cohort,
    k: usize,
    spec: &LossSpec,
    fixed: &ThresholdSet,
    config: &DeConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    let dim = k.saturating_sub(fixed.len());
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "differential evolution needs at least one free threshold".into(),
        ));
    }
    fixed.validate_for(&cohort.domain())?;
    let domain = cohort.domain();
    let eps = 1e-9 * domain.width();
    let repair = Repair {
        lo: domain.lower() + eps,
        span: domain.width() - 2.0 * eps,
        eps,
        lower: domain.lower(),
        upper: domain.upper(),
        fixed: fixed.values(),
    };
    let obj = Objective::new(cohort, spec)?;
    let energy = |x: &Vec<f64>| match repair.apply(x) {
        Some(t) => obj.evaluate(&t),
        None => f64::INFINITY,
    };

    let np = config.population_size_per_dim * dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop = latin_hypercube(np, dim, &mut rng);
    let mut energies: Vec<f64> = pop.par_iter().map(energy).collect();
    let mut evaluations = np as u64;
    let mut best = argmin(&energies);
    let mut trace = Vec::new();

    for gen in 1..=config.max_generations {
        let f = rng.random_range(config.mutation_range.0..=config.mutation_range.1);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| trial(i, &pop, best, f, config, &mut rng))
            .collect();
        let scores: Vec<f64> = trials.par_iter().map(energy).collect();
        evaluations += np as u64;
        for (i, (x, e)) in trials.into_iter().zip(scores).enumerate() {
            if e <= energies[i] {
                pop[i] = x;
                energies[i] = e;
            }
        }
        best = argmin(&energies);
        trace.push(TracePoint {
            iteration: gen,
            best_loss: energies[best],
        });
        if converged(&energies, config.convergence_tol) {
            log::debug!("de: converged after {gen} generations");
            break;
        }
    }

    let mut t = repair.apply(&pop[best]).ok_or_else(|| {
        Error::Infeasible("no valid threshold vector was found".into())
    })?;
    let mut loss = energies[best];
    if config.polish {
        if let Some(cutoffs) = cohort.shared_cutoffs() {
            let (pt, pl, evals) = polish(&obj, cutoffs, &t, fixed);
            evaluations += evals;
            if improves(pl, loss) {
                t = pt;
                loss = pl;
            }
        }
    }
    log::debug!("de: best loss {loss} after {evaluations} evaluations");
    let t = ThresholdSet::with_fixed(t, fixed.values().to_vec())?;
    OptimizationResult::certify(
        cohort,
        t,
        spec,
        Method::DifferentialEvolution,
        evaluations,
        trace,
    )
}

fn latin_hypercube(np: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let seg = 1.0 / np as f64;
    let mut pop = vec![vec![0.0; dim]; np];
    for d in 0..dim {
        let mut col: Vec<f64> = (0..np)
            .map(|i| (i as f64 + rng.random::<f64>()) * seg)
            .collect();
        // Fisher–Yates
        for i in (1..np).rev() {
            col.swap(i, rng.random_range(0..=i));
        }
        for (row, v) in pop.iter_mut().zip(col) {
            row[d] = v;
        }
    }
    pop
}

fn distinct(np: usize, exclude: &[usize], rng: &mut ChaCha8Rng) -> usize {
    loop {
        let r = rng.random_range(0..np);
        if !exclude.contains(&r) {
            return r;
        }
    }
}

fn trial(
    i: usize,
    pop: &[Vec<f64>],
    best: usize,
    f: f64,
    config: &DeConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let np = pop.len();
    let dim = pop[i].len();
    let r0 = distinct(np, &[i], rng);
    let r1 = distinct(np, &[i, r0], rng);
    let mutant: Vec<f64> = match config.strategy {
        Strategy::Rand1Bin => {
            let r2 = distinct(np, &[i, r0, r1], rng);
            (0..dim)
                .map(|d| pop[r0][d] + f * (pop[r1][d] - pop[r2][d]))
                .collect()
        }
        Strategy::Best1Bin => (0..dim)
            .map(|d| pop[best][d] + f * (pop[r0][d] - pop[r1][d]))
            .collect(),
    };
    let fill = rng.random_range(0..dim);
    let mut out = pop[i].clone();
    for d in 0..dim {
        if d == fill || rng.random::<f64>() < config.crossover_prob {
            out[d] = mutant[d];
        }
    }
    for v in out.iter_mut() {
        if !(0.0..=1.0).contains(v) {
            *v = rng.random();
        }
    }
    out
}

fn argmin(e: &[f64]) -> usize {
    let mut b = 0;
    for (i, &v) in e.iter().enumerate() {
        if v < e[b] {
            b = i;
        }
    }
    b
}

fn converged(e: &[f64], tol: f64) -> bool {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() <= tol * mean.abs()
}

/// Coordinate descent over the shared cutoffs, started from `t` snapped to
/// its nearest cutoffs. Returns the local optimum, its loss, and the number
/// of evaluations spent.
fn polish(
    obj: &Objective,
    cutoffs: &[f64],
    t: &[f64],
    fixed: &ThresholdSet,
) -> (Vec<f64>, f64, u64) {
    let mut cur: Vec<f64> = fixed.values().to_vec();
    for &x in t.iter().filter(|x| !fixed.values().contains(*x)) {
        let mut order: Vec<f64> = cutoffs.to_vec();
        order.sort_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()).then(a.total_cmp(b)));
        if let Some(&c) = order.iter().find(|c| !cur.contains(c)) {
            cur.push(c);
        }
    }
    cur.sort_by(f64::total_cmp);
    let mut loss = obj.evaluate(&cur);
    let mut evals = 1u64;
    loop {
        let mut improved = false;
        for pos in 0..cur.len() {
            if fixed.values().contains(&cur[pos]) {
                continue;
            }
            let cands: Vec<Vec<f64>> = cutoffs
                .iter()
                .filter(|c| !cur.contains(c))
                .map(|&c| {
                    let mut v = cur.clone();
                    v[pos] = c;
                    v.sort_by(f64::total_cmp);
                    v
                })
                .collect();
            let losses: Vec<f64> = cands.par_iter().map(|v| obj.evaluate(v)).collect();
            evals += cands.len() as u64;
            let mut best: Option<usize> = None;
            for (c, &l) in losses.iter().enumerate() {
                let target = best.map_or(loss, |b| losses[b]);
                if improves(l, target) {
                    best = Some(c);
                }
            }
            if let Some(b) = best {
                cur = cands[b].clone();
                loss = losses[b];
                improved = true;
                break;
            }
        }
        if !improved {
            return (cur, loss, evals);
        }
    }
}
