//! Time-in-range summaries, univariate logistic classifiers on each range,
//! and side-by-side comparisons of threshold sets between two groups.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::QuantileSource;
use crate::loss::{loss_l1, loss_l2, Cohort, LossKind, LossSpec};
use crate::thresholds::ThresholdSet;

/// Largest slope magnitude the logistic fit may reach.
pub const SLOPE_CAP: f64 = 500.0;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TirSummary {
    pub thresholds: ThresholdSet,
    pub range_labels: Vec<String>,
    pub subject_ids: Vec<Option<String>>,
    /// One composition of `K + 1` proportions per subject.
    pub per_subject: Vec<Vec<f64>>,
}

impl TirSummary {
    /// Proportions of range `k` across subjects.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.per_subject.iter().map(|c| c[k]).collect()
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Labels such as `<70`, `70–180`, `≥181` for integer thresholds, and
/// half-open intervals otherwise.
pub fn range_labels(t: &[f64]) -> Vec<String> {
    if t.is_empty() {
        return vec!["all".into()];
    }
    let integer = t.iter().all(|x| x.fract() == 0.0);
    let mut out = vec![format!("<{}", fmt_num(t[0]))];
    for w in t.windows(2) {
        out.push(if integer {
            format!("{}–{}", fmt_num(w[0]), fmt_num(w[1] - 1.0))
        } else {
            format!("[{}, {})", fmt_num(w[0]), fmt_num(w[1]))
        });
    }
    out.push(format!("≥{}", fmt_num(t[t.len() - 1])));
    out
}

/// Per-subject proportions in each threshold-defined range.
pub fn tir_summary(cohort: &Cohort, t: &ThresholdSet) -> Result<TirSummary> {
    t.validate_for(&cohort.domain())?;
    let per_subject = cohort
        .members()
        .par_iter()
        .map(|m| m.composition(t.values()))
        .collect();
    Ok(TirSummary {
        thresholds: t.clone(),
        range_labels: range_labels(t.values()),
        subject_ids: cohort
            .members()
            .iter()
            .map(|m| m.subject_id().map(str::to_owned))
            .collect(),
        per_subject,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub intercept: f64,
    pub slope: f64,
    /// `-intercept / slope`; absent when the slope is zero.
    pub decision_boundary: Option<f64>,
    pub accuracy: f64,
}

impl ClassifierResult {
    /// Class predicted at `x`; probability exactly one half counts as positive.
    pub fn predict(&self, x: f64) -> bool {
        match self.decision_boundary {
            Some(b) if self.slope > 0.0 => x >= b,
            Some(b) => x <= b,
            None => self.intercept >= 0.0,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn objective(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let z = b0 + b1 * xi;
            if yi {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    nll + 0.5 * RIDGE * (b0 * b0 + b1 * b1)
}

/// Maximum-likelihood logistic regression of `y` on one proportion, by damped
/// Newton steps with a tiny ridge and the slope confined to `[-500, 500]`.
pub fn fit_univariate_logistic(x: &[f64], y: &[bool]) -> Result<ClassifierResult> {
    if x.is_empty() {
        return Err(Error::InvalidLabels("no observations".into()));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::InvalidLabels("both classes must be present".into()));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidLabels(format!("proportion {v} outside [0, 1]")));
    }

    let (mut b0, mut b1) = (0.0f64, 0.0f64);
    let mut f = objective(x, y, b0, b1);
    for _ in 0..500 {
        let (mut g0, mut g1) = (RIDGE * b0, RIDGE * b1);
        let (mut h00, mut h01, mut h11) = (RIDGE, 0.0, RIDGE);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(b0 + b1 * xi);
            let r = p - if yi { 1.0 } else { 0.0 };
            g0 += r;
            g1 += r * xi;
            let w = p * (1.0 - p);
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let at_cap = (b1 >= SLOPE_CAP && g1 < 0.0) || (b1 <= -SLOPE_CAP && g1 > 0.0);
        let (s0, s1) = if at_cap {
            (-g0 / h00, 0.0)
        } else {
            let det = h00 * h11 - h01 * h01;
            (-(h11 * g0 - h01 * g1) / det, -(h00 * g1 - h01 * g0) / det)
        };
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-12 {
            let n0 = b0 + step * s0;
            let n1 = (b1 + step * s1).clamp(-SLOPE_CAP, SLOPE_CAP);
            let nf = objective(x, y, n0, n1);
            if nf <= f {
                moved = (n0 - b0).abs() + (n1 - b1).abs() > 1e-12 * (1.0 + b0.abs() + b1.abs());
                b0 = n0;
                b1 = n1;
                f = nf;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }

    let decision_boundary = (b1 != 0.0).then(|| -b0 / b1);
    let mut out = ClassifierResult {
        intercept: b0,
        slope: b1,
        decision_boundary,
        accuracy: 0.0,
    };
    let correct = x
        .iter()
        .zip(y)
        .filter(|(&xi, &yi)| out.predict(xi) == yi)
        .count();
    out.accuracy = correct as f64 / x.len() as f64;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedThresholds {
    pub name: String,
    pub thresholds: ThresholdSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeResult {
    pub label: String,
    /// `None` when the range has the same proportion for every subject.
    pub classifier: Option<ClassifierResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEvaluation {
    pub name: String,
    pub thresholds: ThresholdSet,
    pub l1: f64,
    pub l2: f64,
    /// Percent reduction versus the reference set; positive is better.
    pub l1_reduction_pct: f64,
    pub l2_reduction_pct: f64,
    pub ranges: Vec<RangeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub grid_size: usize,
    pub n_group_a: usize,
    pub n_group_b: usize,
    pub sets: Vec<SetEvaluation>,
}

fn reduction(reference: f64, value: f64) -> f64 {
    if reference > 0.0 {
        100.0 * (reference - value) / reference
    } else {
        0.0
    }
}

/// Scores every set on the combined cohort and fits one classifier per range
/// separating group A (negative) from group B (positive).
pub fn compare_thresholds(
    group_a: &Cohort,
    group_b: &Cohort,
    sets: &[NamedThresholds],
    reference: usize,
    grid_size: usize,
) -> Result<ComparisonReport> {
    if group_a.domain() != group_b.domain() {
        return Err(Error::InvalidCohort("the two groups have different domains".into()));
    }
    let reference_name = sets
        .get(reference)
        .ok_or_else(|| Error::InvalidParameter(format!("no threshold set at index {reference}")))?
        .name
        .clone();
    let mut combined = group_a.concat(group_b)?.with_grid_size(grid_size)?;
    combined.cache_pairwise();
    let labels: Vec<bool> = (0..combined.len()).map(|i| i >= group_a.len()).collect();
    let l1_spec = LossSpec::new(LossKind::L1, grid_size)?;
    let l2_spec = LossSpec::new(LossKind::L2, grid_size)?;

    let mut evals = Vec::with_capacity(sets.len());
    for set in sets {
        let l1 = loss_l1(&combined, &set.thresholds, &l1_spec)?;
        let l2 = loss_l2(&combined, &set.thresholds, &l2_spec)?;
        let tir = tir_summary(&combined, &set.thresholds)?;
        let ranges = tir
            .range_labels
            .iter()
            .enumerate()
            .map(|(k, label)| {
                let x: Vec<f64> = tir.component(k).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
                let constant = x.iter().all(|&v| v == x[0]);
                let classifier = if constant {
                    None
                } else {
                    Some(fit_univariate_logistic(&x, &labels)?)
                };
                Ok(RangeResult {
                    label: label.clone(),
                    classifier,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        evals.push(SetEvaluation {
            name: set.name.clone(),
            thresholds: set.thresholds.clone(),
            l1,
            l2,
            l1_reduction_pct: 0.0,
            l2_reduction_pct: 0.0,
            ranges,
        });
    }
    let (r1, r2) = (evals[reference].l1, evals[reference].l2);
    for e in &mut evals {
        e.l1_reduction_pct = reduction(r1, e.l1);
        e.l2_reduction_pct = reduction(r2, e.l2);
    }
    Ok(ComparisonReport {
        reference: reference_name,
        grid_size,
        n_group_a: group_a.len(),
        n_group_b: group_b.len(),
        sets: evals,
    })
}

/// Side-by-side Markdown table: for every set, its ranges with the decision
/// boundary and accuracy of the matching classifier.
pub fn comparison_markdown(report: &ComparisonReport) -> String {
    let mut s = String::new();
    let head: Vec<String> = report
        .sets
        .iter()
        .map(|e| format!("{} Ranges | Decision Boundary | Accuracy (%)", e.name))
        .collect();
    s.push_str(&format!("| {} |\n", head.join(" | ")));
    let sep: Vec<&str> = report.sets.iter().map(|_| "---|---:|---:").collect();
    s.push_str(&format!("|{}|\n", sep.join("|")));
    let rows = report.sets.iter().map(|e| e.ranges.len()).max().unwrap_or(0);
    for r in 0..rows {
        let cells: Vec<String> = report
            .sets
            .iter()
            .map(|e| match e.ranges.get(r) {
                Some(rr) => match &rr.classifier {
                    Some(c) => format!(
                        "{} | {} | {:.1}",
                        rr.label,
                        c.decision_boundary.map_or("–".into(), |b| format!("{b:.3}")),
                        100.0 * c.accuracy
                    ),
                    None => format!("{} | – | –", rr.label),
                },
                None => " | | ".into(),
            })
            .collect();
        s.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    s.push('\n');
    for e in &report.sets {
        s.push_str(&format!(
            "- {}: L1 = {:.4}, L2 = {:.4} ({:.1}% L1 and {:.1}% L2 reduction vs {})\n",
            e.name, e.l1, e.l2, e.l1_reduction_pct, e.l2_reduction_pct, report.reference
        ));
    }
    s
}
