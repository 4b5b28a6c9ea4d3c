//! Aggregation baseline that merges neighboring bins so as to preserve
//! pairwise Bray–Curtis dissimilarities.

use rayon::prelude::*;

use super::{improves, DiscreteProblem, Method, OptimizationResult, TracePoint};
use crate::error::Result;
use crate::loss::{Cohort, LossSpec, Objective};
use crate::thresholds::ThresholdSet;

/// Stepwise aggregation driven by the Bray–Curtis distance-preservation
/// objective. The reported loss is that objective, which is not on the same
/// scale as the Wasserstein losses.
pub fn paa_baseline(cohort: &Cohort, k: usize, fixed: &ThresholdSet) -> Result<OptimizationResult> {
    let spec = LossSpec::bray_curtis();
    let prob = DiscreteProblem::new(cohort, k, fixed)?;
    let obj = Objective::new(cohort, &spec)?;
    let members = cohort.members();
    let n = members.len();
    let base = obj.base_dist();
    let scale = obj.pair_scale();

    let mut t = prob.cutoffs.to_vec();
    let mut trace = vec![TracePoint {
        iteration: 0,
        best_loss: obj.evaluate(&t),
    }];
    let mut evaluations = 1u64;
    while t.len() > k {
        let comps: Vec<Vec<f64>> = members.iter().map(|x| x.composition(&t)).collect();
        // merging components p and p + 1 removes threshold t[p]
        let cands: Vec<usize> = (0..t.len()).filter(|&p| !fixed.values().contains(&t[p])).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; cands.len()];
                let mut d = vec![0.0; t.len() + 1];
                let off = i * n - i * (i + 1) / 2;
                for j in (i + 1)..n {
                    let mut s = 0.0;
                    let mut tot = 0.0;
                    for (q, (x, y)) in comps[i].iter().zip(&comps[j]).enumerate() {
                        d[q] = x - y;
                        s += d[q].abs();
                        tot += x + y;
                    }
                    let b0 = base[off + (j - i - 1)];
                    for (a, &p) in acc.iter_mut().zip(&cands) {
                        let s2 = s - d[p].abs() - d[p + 1].abs() + (d[p] + d[p + 1]).abs();
                        let bc = if tot > 0.0 { s2.max(0.0) / tot } else { 0.0 };
                        let e = b0 - bc;
                        *a += e * e;
                    }
                }
                acc
            })
            .collect();
        let mut losses = vec![0.0; cands.len()];
        for row in &rows {
            for (l, r) in losses.iter_mut().zip(row) {
                *l += r;
            }
        }
        let mut best = 0;
        for c in 1..cands.len() {
            if improves(losses[c], losses[best]) {
                best = c;
            }
        }
        evaluations += cands.len() as u64;
        log::trace!(
            "paa: removing {} (objective {})",
            t[cands[best]],
            scale * losses[best]
        );
        t.remove(cands[best]);
        trace.push(TracePoint {
            iteration: trace.len(),
            best_loss: obj.evaluate(&t),
        });
    }
    let t = ThresholdSet::with_fixed(t, fixed.values().to_vec())?;
    OptimizationResult::certify(cohort, t, &spec, Method::Paa, evaluations, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{Domain, Histogram};
    use crate::loss::loss_l2_braycurtis;

    fn cohort() -> Cohort {
        let d = Domain::new(0.0, 4.0).unwrap();
        let c = vec![1.0, 2.0, 3.0];
        let hs = [
            [0.1, 0.4, 0.4, 0.1],
            [0.4, 0.1, 0.1, 0.4],
            [0.25, 0.25, 0.25, 0.25],
            [0.7, 0.1, 0.1, 0.1],
        ]
        .iter()
        .map(|m| Histogram::new(d, c.clone(), m.to_vec(), None).unwrap())
        .collect();
        Cohort::from_histograms(hs).unwrap()
    }

    #[test]
    fn full_resolution_has_zero_objective() {
        let r = paa_baseline(&cohort(), 3, &ThresholdSet::empty()).unwrap();
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn greedy_step_picks_the_best_single_merge() {
        let c = cohort();
        let r = paa_baseline(&c, 2, &ThresholdSet::empty()).unwrap();
        let best = [vec![2.0, 3.0], vec![1.0, 3.0], vec![1.0, 2.0]]
            .into_iter()
            .map(|t| {
                let l = loss_l2_braycurtis(&c, &ThresholdSet::new(t.clone()).unwrap()).unwrap();
                (l, t)
            })
            .fold((f64::INFINITY, vec![]), |a, b| if b.0 < a.0 - 1e-12 { b } else { a });
        assert_eq!(r.thresholds.values(), best.1.as_slice());
        assert!((r.loss - best.0).abs() < 1e-15);
    }
}
