//! Wasserstein-based threshold losses and the Bray–Curtis variant.
//!
//! All grid losses divide by `M + 1`. Per-member and per-pair terms are
//! computed in parallel but always summed in index order, so results do not
//! depend on the number of worker threads.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{Domain, EmpiricalSample, Histogram, Member, MemberKind, QuantileSource};
use crate::quantile::{linearize_into, QuantileGrid, DEFAULT_GRID_SIZE};
use crate::thresholds::ThresholdSet;

/// Which objective to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Distribution preservation.
    #[serde(rename = "l1")]
    L1,
    /// Distance preservation under the 2-Wasserstein metric.
    #[serde(rename = "l2")]
    L2,
    /// Distance preservation under Bray–Curtis dissimilarity.
    #[serde(rename = "bray-curtis")]
    L2BrayCurtis,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
            LossKind::L2BrayCurtis => "bray-curtis",
        }
    }

    pub fn is_wasserstein(&self) -> bool {
        !matches!(self, LossKind::L2BrayCurtis)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            "bray-curtis" | "braycurtis" | "l2_braycurtis" => Ok(LossKind::L2BrayCurtis),
            other => Err(Error::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

/// A loss together with its quantile grid size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LossSpecRepr")]
pub struct LossSpec {
    pub kind: LossKind,
    pub grid_size: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSpecRepr {
    kind: LossKind,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

impl TryFrom<LossSpecRepr> for LossSpec {
    type Error = Error;

    fn try_from(r: LossSpecRepr) -> Result<Self> {
        LossSpec::new(r.kind, r.grid_size)
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::InvalidGridSize);
        }
        Ok(Self { kind, grid_size })
    }

    pub fn l1() -> Self {
        Self {
            kind: LossKind::L1,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn l2() -> Self {
        Self {
            kind: LossKind::L2,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn bray_curtis() -> Self {
        Self {
            kind: LossKind::L2BrayCurtis,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn with_grid_size(self, grid_size: usize) -> Result<Self> {
        Self::new(self.kind, grid_size)
    }
}

/// Members of one kind on one domain, with cached base quantile grids.
#[derive(Debug, Clone)]
pub struct Cohort {
    members: Vec<Member>,
    domain: Domain,
    kind: MemberKind,
    grid_size: usize,
    // row-major n x M
    base: Vec<f64>,
    // condensed upper triangle of ||q_i - q_j||, row-major over i < j
    pairwise: Option<Vec<f64>>,
    shared_cutoffs: Option<Vec<f64>>,
}

impl Cohort {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        Self::with_grid(members, DEFAULT_GRID_SIZE)
    }

    pub fn with_grid(members: Vec<Member>, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::InvalidGridSize);
        }
        let first = members.first().ok_or(Error::EmptyCohort)?;
        let domain = first.domain();
        let kind = first.kind();
        for m in &members[1..] {
            if m.kind() != kind {
                return Err(Error::InvalidCohort(
                    "members mix histograms and samples".into(),
                ));
            }
            if m.domain() != domain {
                return Err(Error::InvalidCohort("members have different domains".into()));
            }
        }
        let shared_cutoffs = match first {
            Member::Histogram(h) => {
                let c = h.cutoffs();
                members
                    .iter()
                    .all(|m| m.as_histogram().is_some_and(|h| h.cutoffs() == c))
                    .then(|| c.to_vec())
            }
            Member::Sample(_) => None,
        };
        let base = base_grids(&members, grid_size);
        Ok(Self {
            members,
            domain,
            kind,
            grid_size,
            base,
            pairwise: None,
            shared_cutoffs,
        })
    }

    pub fn from_histograms(hs: Vec<Histogram>) -> Result<Self> {
        Self::new(hs.into_iter().map(Member::Histogram).collect())
    }

    pub fn from_samples(ss: Vec<EmpiricalSample>) -> Result<Self> {
        Self::new(ss.into_iter().map(Member::Sample).collect())
    }

    /// Rebuilds the cached grids at another grid size.
    pub fn with_grid_size(self, grid_size: usize) -> Result<Self> {
        if grid_size == self.grid_size {
            return Ok(self);
        }
        let cached = self.pairwise.is_some();
        let mut c = Self::with_grid(self.members, grid_size)?;
        if cached {
            c.cache_pairwise();
        }
        Ok(c)
    }

    /// Members of both cohorts, `self` first.
    pub fn concat(&self, other: &Cohort) -> Result<Cohort> {
        let mut members = self.members.clone();
        members.extend(other.members.iter().cloned());
        Self::with_grid(members, self.grid_size)
    }

    /// Computes and stores the base pairwise distances `||q_i - q_j||`.
    pub fn cache_pairwise(&mut self) {
        if self.pairwise.is_none() {
            self.pairwise = Some(pairwise_norms(&self.base, self.len(), self.grid_size));
        }
    }

    pub fn clear_pairwise(&mut self) {
        self.pairwise = None;
    }

    pub fn pairwise(&self) -> Option<&[f64]> {
        self.pairwise.as_deref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn kind(&self) -> MemberKind {
        self.kind
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Cutoffs common to every member, if the cohort is made of histograms on one grid.
    pub fn shared_cutoffs(&self) -> Option<&[f64]> {
        self.shared_cutoffs.as_deref()
    }

    /// Base quantile grid of member `i`.
    pub fn base_grid(&self, i: usize) -> &[f64] {
        &self.base[i * self.grid_size..(i + 1) * self.grid_size]
    }

    pub(crate) fn base_flat(&self) -> &[f64] {
        &self.base
    }

    /// Whether every member only takes integer values (samples) or has integer cutoffs.
    pub fn is_integer_valued(&self) -> bool {
        self.members.iter().all(|m| match m {
            Member::Histogram(h) => h.cutoffs().iter().all(|c| c.fract() == 0.0),
            Member::Sample(s) => s.values().iter().all(|v| v.fract() == 0.0),
        })
    }
}

fn base_grids(members: &[Member], grid_size: usize) -> Vec<f64> {
    let mut base = vec![0.0; members.len() * grid_size];
    base.par_chunks_mut(grid_size)
        .zip(members.par_iter())
        .for_each(|(row, m)| {
            let mut v = Vec::with_capacity(grid_size);
            m.fill_base_grid(grid_size, &mut v);
            row.copy_from_slice(&v);
        });
    base
}

/// Unnormalized squared Euclidean distance with a fixed summation order.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub(crate) fn pairwise_norms(flat: &[f64], n: usize, m: usize) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let qi = &flat[i * m..(i + 1) * m];
            ((i + 1)..n)
                .map(|j| sq_dist(qi, &flat[j * m..(j + 1) * m]).sqrt())
                .collect()
        })
        .collect();
    rows.concat()
}

/// Discretized squared 2-Wasserstein distance `sum (qa_m - qb_m)^2 / (M + 1)`.
pub fn wasserstein_sq(qa: &QuantileGrid, qb: &QuantileGrid) -> Result<f64> {
    if qa.grid_size() != qb.grid_size() {
        return Err(Error::GridSizeMismatch {
            left: qa.grid_size(),
            right: qb.grid_size(),
        });
    }
    Ok(sq_dist(qa.values(), qb.values()) / (qa.grid_size() + 1) as f64)
}

/// Mean squared Wasserstein distance between each member and its linearization at `t`.
pub fn loss_l1(cohort: &Cohort, t: &ThresholdSet, spec: &LossSpec) -> Result<f64> {
    t.validate_for(&cohort.domain())?;
    let spec = LossSpec { kind: LossKind::L1, ..*spec };
    Ok(Objective::new(cohort, &spec)?.evaluate(t.values()))
}

/// Mean squared change of pairwise Wasserstein distances under linearization at `t`.
pub fn loss_l2(cohort: &Cohort, t: &ThresholdSet, spec: &LossSpec) -> Result<f64> {
    t.validate_for(&cohort.domain())?;
    let spec = LossSpec { kind: LossKind::L2, ..*spec };
    Ok(Objective::new(cohort, &spec)?.evaluate(t.values()))
}

/// `sum |x_j - y_j| / sum (x_j + y_j)`.
pub fn bray_curtis(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(bc(x, y))
}

#[inline]
fn bc(x: &[f64], y: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - b).abs();
        den += a + b;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Mean squared change of pairwise Bray–Curtis dissimilarities when the
/// histograms are amalgamated at `t`.
pub fn loss_l2_braycurtis(cohort: &Cohort, t: &ThresholdSet) -> Result<f64> {
    t.validate_for(&cohort.domain())?;
    Ok(Objective::new(cohort, &LossSpec::bray_curtis())?.evaluate(t.values()))
}

/// Dispatches on `spec.kind`.
pub fn evaluate_loss(cohort: &Cohort, t: &ThresholdSet, spec: &LossSpec) -> Result<f64> {
    t.validate_for(&cohort.domain())?;
    Ok(Objective::new(cohort, spec)?.evaluate(t.values()))
}

/// A loss bound to a cohort, with everything that does not depend on `t`
/// precomputed.
pub(crate) struct Objective<'a> {
    pub(crate) cohort: &'a Cohort,
    pub(crate) kind: LossKind,
    pub(crate) m: usize,
    base: Cow<'a, [f64]>,
    // condensed base pairwise distances (Wasserstein norms or Bray–Curtis)
    base_dist: Cow<'a, [f64]>,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(cohort: &'a Cohort, spec: &LossSpec) -> Result<Self> {
        if spec.grid_size == 0 {
            return Err(Error::InvalidGridSize);
        }
        let n = cohort.len();
        let m = spec.grid_size;
        if spec.kind != LossKind::L1 && n < 2 {
            return Err(Error::TooFewMembers { need: 2, got: n });
        }
        let base: Cow<[f64]> = if m == cohort.grid_size {
            Cow::Borrowed(cohort.base_flat())
        } else {
            Cow::Owned(base_grids(cohort.members(), m))
        };
        let base_dist: Cow<[f64]> = match spec.kind {
            LossKind::L1 => Cow::Owned(Vec::new()),
            LossKind::L2 => match cohort.pairwise() {
                Some(p) if m == cohort.grid_size => Cow::Borrowed(p),
                _ => Cow::Owned(pairwise_norms(&base, n, m)),
            },
            LossKind::L2BrayCurtis => {
                let cut = cohort.shared_cutoffs().ok_or_else(|| {
                    Error::Incompatible(
                        "Bray–Curtis loss needs histograms on shared cutoffs".into(),
                    )
                })?;
                let comps: Vec<Vec<f64>> =
                    cohort.members().iter().map(|x| x.composition(cut)).collect();
                Cow::Owned(pairwise_bc(&comps))
            }
        };
        Ok(Self {
            cohort,
            kind: spec.kind,
            m,
            base,
            base_dist,
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.cohort.len()
    }

    pub(crate) fn base_row(&self, i: usize) -> &[f64] {
        &self.base[i * self.m..(i + 1) * self.m]
    }

    pub(crate) fn base_dist(&self) -> &[f64] {
        &self.base_dist
    }

    /// Loss at `t`, assumed valid and strictly increasing.
    pub(crate) fn evaluate(&self, t: &[f64]) -> f64 {
        match self.kind {
            LossKind::L1 => self.eval_l1(t),
            LossKind::L2 => {
                let grids = self.linearize_all(t);
                self.l2_from_grids(&grids)
            }
            LossKind::L2BrayCurtis => {
                let comps: Vec<Vec<f64>> = self
                    .cohort
                    .members()
                    .iter()
                    .map(|x| x.composition(t))
                    .collect();
                self.bc_from_compositions(&comps)
            }
        }
    }

    fn eval_l1(&self, t: &[f64]) -> f64 {
        let m = self.m;
        let terms: Vec<f64> = self
            .cohort
            .members()
            .par_iter()
            .enumerate()
            .map_init(
                || Vec::with_capacity(m),
                |buf, (i, member)| {
                    linearize_into(member, t, m, buf);
                    sq_dist(self.base_row(i), buf)
                },
            )
            .collect();
        terms.iter().sum::<f64>() / (self.n() as f64 * (m + 1) as f64)
    }

    /// Linearized grids of all members, row-major n x M.
    pub(crate) fn linearize_all(&self, t: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; self.n() * m];
        out.par_chunks_mut(m)
            .zip(self.cohort.members().par_iter())
            .for_each_init(
                || Vec::with_capacity(m),
                |buf, (row, member)| {
                    linearize_into(member, t, m, buf);
                    row.copy_from_slice(buf);
                },
            );
        out
    }

    /// L1 from already linearized grids.
    pub(crate) fn l1_from_grids(&self, grids: &[f64]) -> f64 {
        let m = self.m;
        let s: f64 = (0..self.n())
            .map(|i| sq_dist(self.base_row(i), &grids[i * m..(i + 1) * m]))
            .sum();
        s / (self.n() as f64 * (m + 1) as f64)
    }

    /// L2 from already linearized grids.
    pub(crate) fn l2_from_grids(&self, grids: &[f64]) -> f64 {
        let n = self.n();
        let m = self.m;
        let offsets = row_offsets(n);
        let base = &self.base_dist;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let qi = &grids[i * m..(i + 1) * m];
                let d0 = &base[offsets[i]..offsets[i] + (n - i - 1)];
                let mut s = 0.0;
                for (k, j) in ((i + 1)..n).enumerate() {
                    let dt = sq_dist(qi, &grids[j * m..(j + 1) * m]).sqrt();
                    let e = d0[k] - dt;
                    s += e * e;
                }
                s
            })
            .collect();
        self.pair_scale() * rows.iter().sum::<f64>() / (m + 1) as f64
    }

    pub(crate) fn bc_from_compositions(&self, comps: &[Vec<f64>]) -> f64 {
        let n = self.n();
        let offsets = row_offsets(n);
        let base = &self.base_dist;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let d0 = &base[offsets[i]..offsets[i] + (n - i - 1)];
                let mut s = 0.0;
                for (k, j) in ((i + 1)..n).enumerate() {
                    let e = d0[k] - bc(&comps[i], &comps[j]);
                    s += e * e;
                }
                s
            })
            .collect();
        self.pair_scale() * rows.iter().sum::<f64>()
    }

    /// `2 / (n (n - 1))`.
    pub(crate) fn pair_scale(&self) -> f64 {
        let n = self.n() as f64;
        2.0 / (n * (n - 1.0))
    }
}

fn pairwise_bc(comps: &[Vec<f64>]) -> Vec<f64> {
    let n = comps.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| bc(&comps[i], &comps[j])).collect())
        .collect();
    rows.concat()
}

/// Start of row `i` in a condensed upper-triangular pair array.
pub(crate) fn row_offsets(n: usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(n);
    let mut acc = 0;
    for i in 0..n {
        off.push(acc);
        acc += n - i - 1;
    }
    off
}
