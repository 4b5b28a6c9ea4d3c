//! Bounded one-dimensional distributions.
//!
//! Two representations are supported: a [`Histogram`] (cutoffs plus a
//! probability composition, read as a locally constant density) and an
//! [`EmpiricalSample`] (sorted raw observations). Both expose their CDF and
//! left-continuous quantile function through [`QuantileSource`], which is all
//! the loss machinery needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::interp;
use crate::thresholds::ThresholdSet;

/// Tolerance on the total mass of a composition.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Closed measurement interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr")]
pub struct Domain {
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct DomainRepr {
    lower: f64,
    upper: f64,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.lower, r.upper)
    }
}

impl Domain {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidDomain { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// CGM domain: integer readings 40..=400 mg/dL, each occupying `[g, g + 1)`.
    pub fn cgm() -> Self {
        Self {
            lower: 40.0,
            upper: 401.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub(crate) fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                value: x,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    pub(crate) fn check_cutoffs(&self, cutoffs: &[f64]) -> Result<()> {
        for w in cutoffs.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidCutoffs(format!(
                    "cutoffs must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&c) = cutoffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidCutoffs(format!("non-finite cutoff {c}")));
        }
        if let (Some(&first), Some(&last)) = (cutoffs.first(), cutoffs.last()) {
            if !(self.lower < first && last < self.upper) {
                return Err(Error::InvalidCutoffs(format!(
                    "cutoffs must lie strictly inside ({}, {})",
                    self.lower, self.upper
                )));
            }
        }
        Ok(())
    }
}

/// A quantile-function knot used to build piecewise-linear quantiles.
///
/// `p` is the CDF value at a threshold. `below` is the left limit of the
/// quantile function at `p` (the value closing the segment that ends at `p`)
/// and `above` is the value opening the segment that starts at `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub p: f64,
    pub below: f64,
    pub above: f64,
}

/// Anything with a CDF and a left-continuous quantile function on a bounded domain.
pub trait QuantileSource {
    fn domain(&self) -> Domain;

    fn subject_id(&self) -> Option<&str>;

    /// Mass on `[lower, x)`.
    fn cdf_below(&self, x: f64) -> f64;

    /// `inf { x : F(x) >= p }`, with `p` assumed in `[0, 1]`.
    fn quantile_left(&self, p: f64) -> f64;

    /// Knot at threshold `t` (assumed inside the domain).
    fn anchor(&self, t: f64) -> Anchor;

    /// Knot at probability 0; its value is `q(0+)`.
    fn lower_anchor(&self) -> Anchor;

    /// Knot at probability 1; its value is `q(1)`.
    fn upper_anchor(&self) -> Anchor;

    /// Appends `q(m / (M + 1))` for `m = 1..=M` to `out`.
    fn fill_base_grid(&self, grid_size: usize, out: &mut Vec<f64>) {
        let denom = (grid_size + 1) as f64;
        out.extend((1..=grid_size).map(|m| self.quantile_left(m as f64 / denom)));
    }
}

/// Histogram on a bounded domain with bins `[s_j, s_{j+1})`; the top bin is
/// closed at the upper bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct Histogram {
    domain: Domain,
    cutoffs: Vec<f64>,
    masses: Vec<f64>,
    subject_id: Option<String>,
    // a, s_1, ..., s_J, b
    edges: Vec<f64>,
    // cum[j] = mass of bins 0..j; forced to exactly 1 from the last populated bin on.
    cum: Vec<f64>,
    // support_below[j]: right edge of the last populated bin with index < j (NaN if none).
    support_below: Vec<f64>,
    // support_above[j]: left edge of the first populated bin with index >= j (NaN if none).
    support_above: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistogramRepr {
    domain: Domain,
    cutoffs: Vec<f64>,
    masses: Vec<f64>,
    #[serde(default)]
    subject_id: Option<String>,
}

impl TryFrom<HistogramRepr> for Histogram {
    type Error = Error;

    fn try_from(r: HistogramRepr) -> Result<Self> {
        Histogram::new(r.domain, r.cutoffs, r.masses, r.subject_id)
    }
}

impl From<Histogram> for HistogramRepr {
    fn from(h: Histogram) -> Self {
        HistogramRepr {
            domain: h.domain,
            cutoffs: h.cutoffs,
            masses: h.masses,
            subject_id: h.subject_id,
        }
    }
}

impl PartialEq for Histogram {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.cutoffs == other.cutoffs
            && self.masses == other.masses
            && self.subject_id == other.subject_id
    }
}

impl Histogram {
    pub fn new(
        domain: Domain,
        cutoffs: Vec<f64>,
        masses: Vec<f64>,
        subject_id: Option<String>,
    ) -> Result<Self> {
        domain.check_cutoffs(&cutoffs)?;
        if masses.len() != cutoffs.len() + 1 {
            return Err(Error::InvalidMasses(format!(
                "expected {} masses for {} cutoffs, got {}",
                cutoffs.len() + 1,
                cutoffs.len(),
                masses.len()
            )));
        }
        if let Some(&m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidMasses(format!("mass {m} is negative or non-finite")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMasses(format!("masses sum to {total}, not 1")));
        }

        let nbins = masses.len();
        let mut edges = Vec::with_capacity(nbins + 1);
        edges.push(domain.lower);
        edges.extend_from_slice(&cutoffs);
        edges.push(domain.upper);

        let mut cum = Vec::with_capacity(nbins + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &m in &masses {
            acc += m;
            cum.push(acc);
        }
        let last = masses
            .iter()
            .rposition(|&m| m > 0.0)
            .expect("masses sum to one");
        for c in cum.iter_mut().skip(last + 1) {
            *c = 1.0;
        }

        let populated = |j: usize| cum[j + 1] > cum[j];
        let mut support_below = vec![f64::NAN; nbins + 1];
        for j in 1..=nbins {
            support_below[j] = if populated(j - 1) {
                edges[j]
            } else {
                support_below[j - 1]
            };
        }
        let mut support_above = vec![f64::NAN; nbins + 1];
        for j in (0..nbins).rev() {
            support_above[j] = if populated(j) {
                edges[j]
            } else {
                support_above[j + 1]
            };
        }

        Ok(Self {
            domain,
            cutoffs,
            masses,
            subject_id,
            edges,
            cum,
            support_below,
            support_above,
        })
    }

    /// Bins `values` by `cutoffs`; each mass is the fraction of values in its bin.
    pub fn from_sample(sample: &EmpiricalSample, cutoffs: Vec<f64>) -> Result<Self> {
        let domain = sample.domain();
        domain.check_cutoffs(&cutoffs)?;
        let mut counts = vec![0usize; cutoffs.len() + 1];
        for &v in sample.values() {
            counts[cutoffs.partition_point(|&c| c <= v)] += 1;
        }
        let n = sample.len() as f64;
        let masses = counts.iter().map(|&c| c as f64 / n).collect();
        Self::new(
            domain,
            cutoffs,
            masses,
            sample.subject_id().map(str::to_owned),
        )
    }

    /// One bin per unit interval `[g, g + 1)` over the domain, for integer-valued data.
    pub fn unit_bins(domain: Domain, counts: &[usize], subject_id: Option<String>) -> Result<Self> {
        let lo = domain.lower();
        let nbins = domain.width().round() as usize;
        if lo.fract() != 0.0 || (domain.width() - nbins as f64) != 0.0 {
            return Err(Error::InvalidCutoffs(
                "unit bins need an integer-aligned domain".into(),
            ));
        }
        if counts.len() != nbins {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: nbins,
            });
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptySample);
        }
        let cutoffs = (1..nbins).map(|k| lo + k as f64).collect();
        let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(domain, cutoffs, masses, subject_id)
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn with_subject_id(mut self, id: impl Into<String>) -> Self {
        self.subject_id = Some(id.into());
        self
    }

    fn bin_of(&self, x: f64) -> usize {
        self.cutoffs.partition_point(|&c| c <= x)
    }

    fn populated(&self, j: usize) -> bool {
        self.cum[j + 1] > self.cum[j]
    }

    /// Mass on `[lower, x)` under the locally constant density.
    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.cdf_below(x))
    }

    /// Left-continuous generalized inverse of [`Histogram::cdf_at`].
    pub fn quantile_at(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(self.quantile_left(p))
    }

    /// Merges the bins between consecutive selected cutoffs.
    pub fn amalgamate(&self, t: &ThresholdSet) -> Result<Histogram> {
        let mut idx = Vec::with_capacity(t.len());
        for &x in t.values() {
            match self.cutoffs.iter().position(|&c| c == x) {
                Some(i) => idx.push(i),
                None => return Err(Error::NotACutoff(x)),
            }
        }
        let mut masses = Vec::with_capacity(idx.len() + 1);
        let mut start = 0;
        for &i in idx.iter().chain(std::iter::once(&self.cutoffs.len())) {
            masses.push(self.masses[start..=i].iter().sum());
            start = i + 1;
        }
        Histogram::new(
            self.domain,
            t.values().to_vec(),
            masses,
            self.subject_id.clone(),
        )
    }

    /// Integrates the locally constant density between consecutive thresholds,
    /// which need not coincide with the cutoffs.
    pub fn soft_amalgamate(&self, t: &ThresholdSet) -> Result<Histogram> {
        t.validate_for(&self.domain)?;
        let masses = self.soft_composition(t.values());
        Histogram::new(
            self.domain,
            t.values().to_vec(),
            masses,
            self.subject_id.clone(),
        )
    }

    pub(crate) fn soft_composition(&self, t: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(t.len() + 1);
        let mut prev = 0.0;
        for &x in t {
            let f = self.cdf_below(x);
            out.push(f - prev);
            prev = f;
        }
        out.push(1.0 - prev);
        out
    }

    /// The histogram whose quantile function is the piecewise-linear
    /// interpolation of this histogram's quantile at `t`.
    pub fn linearized(&self, t: &ThresholdSet) -> Result<Histogram> {
        t.validate_for(&self.domain)?;
        let mut anchors = Vec::with_capacity(t.len() + 2);
        anchors.push(self.lower_anchor());
        anchors.extend(t.values().iter().map(|&x| self.anchor(x)));
        anchors.push(self.upper_anchor());

        let mut edges = vec![self.domain.lower];
        let mut masses = Vec::new();
        let mut lo = anchors[0];
        for &hi in &anchors[1..] {
            if hi.p > lo.p {
                let (x0, x1) = (lo.above, hi.below);
                let cur = *edges.last().unwrap();
                if x0 > cur {
                    edges.push(x0);
                    masses.push(0.0);
                }
                edges.push(x1);
                masses.push(hi.p - lo.p);
            }
            lo = hi;
        }
        if *edges.last().unwrap() < self.domain.upper {
            edges.push(self.domain.upper);
            masses.push(0.0);
        }
        let cutoffs = edges[1..edges.len() - 1].to_vec();
        Histogram::new(self.domain, cutoffs, masses, self.subject_id.clone())
    }
}

impl QuantileSource for Histogram {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn subject_id(&self) -> Option<&str> {
        self.subject_id.as_deref()
    }

    fn cdf_below(&self, x: f64) -> f64 {
        if x <= self.domain.lower {
            return 0.0;
        }
        if x >= self.domain.upper {
            return 1.0;
        }
        let j = self.bin_of(x);
        let (c0, c1) = (self.cum[j], self.cum[j + 1]);
        c0 + (c1 - c0) * ((x - self.edges[j]) / (self.edges[j + 1] - self.edges[j]))
    }

    fn quantile_left(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.domain.lower;
        }
        let j = self.cum[1..].partition_point(|&c| c < p);
        if j >= self.masses.len() {
            return self.upper_anchor().below;
        }
        interp(
            self.edges[j],
            self.edges[j + 1],
            self.cum[j],
            self.cum[j + 1],
            p,
        )
    }

    fn anchor(&self, t: f64) -> Anchor {
        if t <= self.domain.lower {
            return self.lower_anchor();
        }
        if t >= self.domain.upper {
            return self.upper_anchor();
        }
        let j = self.bin_of(t);
        let p = self.cdf_below(t);
        if t > self.edges[j] && self.populated(j) {
            return Anchor {
                p,
                below: t,
                above: t,
            };
        }
        let mut below = self.support_below[j];
        if below.is_nan() {
            below = self.lower_anchor().above;
        }
        let mut above = self.support_above[j];
        if above.is_nan() {
            above = self.upper_anchor().below;
        }
        Anchor { p, below, above }
    }

    fn lower_anchor(&self) -> Anchor {
        let v = self.support_above[0];
        Anchor {
            p: 0.0,
            below: v,
            above: v,
        }
    }

    fn upper_anchor(&self) -> Anchor {
        let v = self.support_below[self.masses.len()];
        Anchor {
            p: 1.0,
            below: v,
            above: v,
        }
    }
}

/// Raw observations of one subject, kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRepr", into = "SampleRepr")]
pub struct EmpiricalSample {
    domain: Domain,
    values: Vec<f64>,
    subject_id: Option<String>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRepr {
    domain: Domain,
    values: Vec<f64>,
    #[serde(default)]
    subject_id: Option<String>,
}

impl TryFrom<SampleRepr> for EmpiricalSample {
    type Error = Error;

    fn try_from(r: SampleRepr) -> Result<Self> {
        EmpiricalSample::new(r.domain, r.values, r.subject_id)
    }
}

impl From<EmpiricalSample> for SampleRepr {
    fn from(s: EmpiricalSample) -> Self {
        SampleRepr {
            domain: s.domain,
            values: s.values,
            subject_id: s.subject_id,
        }
    }
}

impl EmpiricalSample {
    pub fn new(domain: Domain, mut values: Vec<f64>, subject_id: Option<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        for &v in &values {
            domain.check(v)?;
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            domain,
            values,
            subject_id,
        })
    }

    /// Sorted observations.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.cdf_below(x))
    }

    pub fn quantile_at(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(self.quantile_left(p))
    }

    /// Fractions of observations in `[t_k, t_{k+1})`, top interval closed.
    pub fn composition(&self, t: &[f64]) -> Vec<f64> {
        let n = self.values.len() as f64;
        let mut out = Vec::with_capacity(t.len() + 1);
        let mut prev = 0usize;
        for &x in t {
            let c = self.values.partition_point(|&v| v < x);
            out.push((c - prev) as f64 / n);
            prev = c;
        }
        out.push((self.values.len() - prev) as f64 / n);
        out
    }

    fn order_stat(&self, k: usize) -> f64 {
        self.values[k.clamp(1, self.values.len()) - 1]
    }
}

impl QuantileSource for EmpiricalSample {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn subject_id(&self) -> Option<&str> {
        self.subject_id.as_deref()
    }

    fn cdf_below(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v < x) as f64 / self.values.len() as f64
    }

    fn quantile_left(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.domain.lower;
        }
        let n = self.values.len() as f64;
        // ceil(p N), tolerant to representation error in p
        let k = (p * n - 1e-9).ceil().max(1.0) as usize;
        self.order_stat(k)
    }

    fn anchor(&self, t: f64) -> Anchor {
        let c = self.values.partition_point(|&v| v < t);
        let v = self.order_stat(c);
        Anchor {
            p: c as f64 / self.values.len() as f64,
            below: v,
            above: v,
        }
    }

    fn lower_anchor(&self) -> Anchor {
        let v = self.values[0];
        Anchor {
            p: 0.0,
            below: v,
            above: v,
        }
    }

    fn upper_anchor(&self) -> Anchor {
        let v = *self.values.last().unwrap();
        Anchor {
            p: 1.0,
            below: v,
            above: v,
        }
    }

    fn fill_base_grid(&self, grid_size: usize, out: &mut Vec<f64>) {
        // order statistic ceil(m N / (M + 1)), in exact integer arithmetic
        let n = self.values.len() as u128;
        let d = grid_size as u128 + 1;
        out.extend((1..=grid_size as u128).map(|m| self.order_stat(((m * n + d - 1) / d) as usize)));
    }
}

/// Kind of a cohort member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    Histogram,
    Sample,
}

/// A cohort member: either representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    Histogram(Histogram),
    Sample(EmpiricalSample),
}

impl Member {
    pub fn kind(&self) -> MemberKind {
        match self {
            Member::Histogram(_) => MemberKind::Histogram,
            Member::Sample(_) => MemberKind::Sample,
        }
    }

    pub fn as_histogram(&self) -> Option<&Histogram> {
        match self {
            Member::Histogram(h) => Some(h),
            Member::Sample(_) => None,
        }
    }

    pub fn as_sample(&self) -> Option<&EmpiricalSample> {
        match self {
            Member::Sample(s) => Some(s),
            Member::Histogram(_) => None,
        }
    }

    /// Soft amalgamation at `t` as a composition of `t.len() + 1` parts.
    pub fn composition(&self, t: &[f64]) -> Vec<f64> {
        match self {
            Member::Histogram(h) => h.soft_composition(t),
            Member::Sample(s) => s.composition(t),
        }
    }
}

impl From<Histogram> for Member {
    fn from(h: Histogram) -> Self {
        Member::Histogram(h)
    }
}

impl From<EmpiricalSample> for Member {
    fn from(s: EmpiricalSample) -> Self {
        Member::Sample(s)
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Member::Histogram($m) => $e,
            Member::Sample($m) => $e,
        }
    };
}

impl QuantileSource for Member {
    fn domain(&self) -> Domain {
        delegate!(self, m => m.domain())
    }

    fn subject_id(&self) -> Option<&str> {
        delegate!(self, m => m.subject_id())
    }

    fn cdf_below(&self, x: f64) -> f64 {
        delegate!(self, m => m.cdf_below(x))
    }

    fn quantile_left(&self, p: f64) -> f64 {
        delegate!(self, m => m.quantile_left(p))
    }

    fn anchor(&self, t: f64) -> Anchor {
        delegate!(self, m => m.anchor(t))
    }

    fn lower_anchor(&self) -> Anchor {
        delegate!(self, m => m.lower_anchor())
    }

    fn upper_anchor(&self) -> Anchor {
        delegate!(self, m => m.upper_anchor())
    }

    fn fill_base_grid(&self, grid_size: usize, out: &mut Vec<f64>) {
        delegate!(self, m => m.fill_base_grid(grid_size, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Domain {
        Domain::new(0.0, 1.0).unwrap()
    }

    fn hist(cutoffs: &[f64], masses: &[f64]) -> Histogram {
        Histogram::new(unit(), cutoffs.to_vec(), masses.to_vec(), None).unwrap()
    }

    #[test]
    fn domain_rejects_inverted_bounds() {
        assert!(Domain::new(1.0, 1.0).is_err());
        assert!(Domain::new(2.0, 1.0).is_err());
        assert!(Domain::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn build_histogram_counts_left_closed_bins() {
        let d = Domain::new(40.0, 401.0).unwrap();
        let s = EmpiricalSample::new(d, vec![40.0, 40.0, 400.0, 400.0], None).unwrap();
        let h = Histogram::from_sample(&s, vec![70.0]).unwrap();
        assert_eq!(h.masses(), &[0.5, 0.5]);

        let s = EmpiricalSample::new(d, vec![50.0, 60.0, 80.0], None).unwrap();
        let h = Histogram::from_sample(&s, vec![70.0, 181.0]).unwrap();
        assert_eq!(h.masses(), &[2.0 / 3.0, 1.0 / 3.0, 0.0]);

        // a value on a cutoff belongs to the bin above it; b is in the top bin
        let s = EmpiricalSample::new(unit(), vec![0.5, 1.0], None).unwrap();
        let h = Histogram::from_sample(&s, vec![0.5]).unwrap();
        assert_eq!(h.masses(), &[0.0, 1.0]);
    }

    #[test]
    fn build_histogram_errors() {
        assert!(matches!(
            EmpiricalSample::new(unit(), vec![], None),
            Err(Error::EmptySample)
        ));
        let s = EmpiricalSample::new(unit(), vec![0.2], None).unwrap();
        assert!(Histogram::from_sample(&s, vec![0.5, 0.4]).is_err());
        assert!(Histogram::from_sample(&s, vec![1.0]).is_err());
        assert!(Histogram::from_sample(&s, vec![0.0]).is_err());
    }

    #[test]
    fn histogram_validates_masses() {
        assert!(Histogram::new(unit(), vec![0.5], vec![0.5], None).is_err());
        assert!(Histogram::new(unit(), vec![0.5], vec![0.6, 0.5], None).is_err());
        assert!(Histogram::new(unit(), vec![0.5], vec![-0.1, 1.1], None).is_err());
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(hist(&[], &[1.0]).cdf_at(0.25).unwrap(), 0.25);
        assert_eq!(hist(&[0.5], &[0.5, 0.5]).cdf_at(0.5).unwrap(), 0.5);
        assert!((hist(&[0.5], &[0.2, 0.8]).cdf_at(0.75).unwrap() - 0.6).abs() < 1e-15);
        let h = hist(&[0.5], &[0.2, 0.8]);
        assert_eq!(h.cdf_at(0.0).unwrap(), 0.0);
        assert_eq!(h.cdf_at(1.0).unwrap(), 1.0);
        assert!(h.cdf_at(1.5).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert!((hist(&[], &[1.0]).quantile_at(0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((hist(&[0.5], &[0.2, 0.8]).quantile_at(0.6).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(hist(&[0.5], &[1.0, 0.0]).quantile_at(1.0).unwrap(), 0.5);
        assert!(hist(&[0.5], &[1.0, 0.0]).quantile_at(1.1).is_err());
        assert!(hist(&[0.5], &[1.0, 0.0]).quantile_at(-0.1).is_err());
    }

    #[test]
    fn quantile_skips_empty_bins() {
        // mass on [0, 0.25) and [0.75, 1)
        let h = hist(&[0.25, 0.75], &[0.5, 0.0, 0.5]);
        assert_eq!(h.quantile_at(0.5).unwrap(), 0.25);
        assert!((h.quantile_at(0.5 + 1e-12).unwrap() - 0.75).abs() < 1e-9);
        let a = h.anchor(0.5);
        assert_eq!((a.p, a.below, a.above), (0.5, 0.25, 0.75));
        assert_eq!(h.lower_anchor().above, 0.0);
        assert_eq!(h.upper_anchor().below, 1.0);

        let h = hist(&[0.25, 0.75], &[0.0, 1.0, 0.0]);
        assert_eq!(h.lower_anchor().above, 0.25);
        assert_eq!(h.upper_anchor().below, 0.75);
        assert_eq!(h.anchor(0.1).p, 0.0);
        assert_eq!(h.anchor(0.9).p, 1.0);
    }

    #[test]
    fn generalized_inverse_axioms() {
        let h = hist(&[0.1, 0.3, 0.35, 0.8], &[0.1, 0.0, 0.3, 0.45, 0.15]);
        for i in 0..=400 {
            let x = i as f64 / 400.0;
            let p = x;
            assert!(h.cdf_below(h.quantile_left(p)) >= p - 1e-12);
            assert!(h.quantile_left(h.cdf_below(x)) <= x + 1e-12);
        }
        let s = EmpiricalSample::new(unit(), vec![0.1, 0.1, 0.4, 0.9], None).unwrap();
        for i in 0..=400 {
            let x = i as f64 / 400.0;
            // right-continuous F for the sample-side check
            let f = s.values().partition_point(|&v| v <= x) as f64 / 4.0;
            assert!(s.quantile_left(f) <= x);
            let q = s.quantile_left(x);
            let fq = s.values().partition_point(|&v| v <= q) as f64 / 4.0;
            assert!(fq >= x - 1e-12);
        }
    }

    #[test]
    fn amalgamate_examples() {
        let h = hist(&[0.25, 0.5, 0.75], &[0.2, 0.3, 0.4, 0.1]);
        let keep = ThresholdSet::new(vec![0.5]).unwrap();
        let a = h.amalgamate(&keep).unwrap();
        assert_eq!(a.masses(), &[0.5, 0.5]);
        let all = ThresholdSet::new(vec![0.25, 0.5, 0.75]).unwrap();
        assert_eq!(h.amalgamate(&all).unwrap(), h);
        let none = ThresholdSet::new(vec![]).unwrap();
        let a = h.amalgamate(&none).unwrap();
        assert_eq!(a.num_bins(), 1);
        assert!((a.masses()[0] - 1.0).abs() < 1e-15);
        let bad = ThresholdSet::new(vec![0.6]).unwrap();
        assert!(matches!(h.amalgamate(&bad), Err(Error::NotACutoff(_))));
    }

    #[test]
    fn soft_amalgamate_examples() {
        let t = ThresholdSet::new(vec![0.25]).unwrap();
        let s = hist(&[], &[1.0]).soft_amalgamate(&t).unwrap();
        assert_eq!(s.masses(), &[0.25, 0.75]);

        let t = ThresholdSet::new(vec![0.75]).unwrap();
        let s = hist(&[0.5], &[0.2, 0.8]).soft_amalgamate(&t).unwrap();
        assert!((s.masses()[0] - 0.6).abs() < 1e-15);
        assert!((s.masses()[1] - 0.4).abs() < 1e-15);

        let h = hist(&[0.25, 0.5, 0.75], &[0.2, 0.3, 0.4, 0.1]);
        let t = ThresholdSet::new(vec![0.25, 0.75]).unwrap();
        let soft = h.soft_amalgamate(&t).unwrap();
        let hard = h.amalgamate(&t).unwrap();
        for (a, b) in soft.masses().iter().zip(hard.masses()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_bins_cover_cgm_range() {
        let mut counts = vec![0usize; 361];
        counts[60] = 3;
        counts[0] = 1;
        let h = Histogram::unit_bins(Domain::cgm(), &counts, None).unwrap();
        assert_eq!(h.num_bins(), 361);
        assert_eq!(h.cutoffs()[0], 41.0);
        assert_eq!(*h.cutoffs().last().unwrap(), 400.0);
        assert_eq!(h.masses()[60], 0.75);
    }

    #[test]
    fn linearized_histogram_matches_linearized_quantile() {
        let h = hist(&[0.25, 0.5, 0.75], &[0.2, 0.0, 0.6, 0.2]);
        let t = ThresholdSet::new(vec![0.6]).unwrap();
        let lin = h.linearized(&t).unwrap();
        let grid = crate::quantile::linearized_quantile_grid(&h, &t, 50).unwrap();
        let base = crate::quantile::quantile_grid(&lin, 50).unwrap();
        for (a, b) in grid.values().iter().zip(base.values()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
