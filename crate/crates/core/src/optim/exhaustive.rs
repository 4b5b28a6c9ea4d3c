//! Brute-force search over every size-K subset of the shared cutoffs.

use rayon::prelude::*;

use super::{improves, DiscreteProblem, Method, OptimizationResult, TracePoint};
use crate::error::{Error, Result};
use crate::loss::{Cohort, LossSpec, Objective};
use crate::thresholds::ThresholdSet;

/// Default cap on the number of subsets scanned.
pub const DEFAULT_BUDGET: u128 = 2_000_000;

const BATCH: usize = 2048;

/// `n choose k`, saturating at `u128::MAX`.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact: acc * (n - i) is divisible by (i + 1) after the multiplication
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances `comb` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let Some(i) = (0..k).rev().find(|&i| comb[i] < n - k + i) else {
        return false;
    };
    comb[i] += 1;
    for j in (i + 1)..k {
        comb[j] = comb[j - 1] + 1;
    }
    true
}

/// Globally optimal size-`k` subset of the cutoffs containing `fixed`.
/// Ties go to the lexicographically smallest threshold vector.
pub fn exhaustive_search(
    cohort: &Cohort,
    k: usize,
    spec: &LossSpec,
    fixed: &ThresholdSet,
    budget: u128,
) -> Result<OptimizationResult> {
    let prob = DiscreteProblem::new(cohort, k, fixed)?;
    let free: Vec<usize> = (0..prob.cutoffs.len())
        .filter(|&j| !prob.is_fixed(j))
        .collect();
    let kf = k - prob.fixed.len();
    let size = binomial(free.len(), kf);
    if size > budget {
        return Err(Error::BudgetExceeded { size, budget });
    }
    let obj = Objective::new(cohort, spec)?;

    let to_values = |comb: &[usize]| {
        let mut idx: Vec<usize> = comb.iter().map(|&c| free[c]).collect();
        idx.extend_from_slice(&prob.fixed);
        idx.sort_unstable();
        prob.values(&idx)
    };

    let mut comb: Vec<usize> = (0..kf).collect();
    let mut more = true;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0u64;
    while more {
        let mut batch = Vec::with_capacity(BATCH);
        while more && batch.len() < BATCH {
            batch.push(to_values(&comb));
            more = next_combination(&mut comb, free.len());
        }
        let losses: Vec<f64> = batch.par_iter().map(|t| obj.evaluate(t)).collect();
        for (t, loss) in batch.into_iter().zip(losses) {
            evaluations += 1;
            let better = match &best {
                None => true,
                Some((b, _)) => improves(loss, *b),
            };
            if better {
                trace.push(TracePoint {
                    iteration: evaluations as usize,
                    best_loss: loss,
                });
                best = Some((loss, t));
            }
        }
    }
    let (_, t) = best.expect("at least one subset");
    let t = ThresholdSet::with_fixed(t, fixed.values().to_vec())?;
    OptimizationResult::certify(cohort, t, spec, Method::Exhaustive, evaluations, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(360, 4), 688_235_310);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(1000, 500), u128::MAX);
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![0, 1];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        let mut empty: Vec<usize> = vec![];
        assert!(!next_combination(&mut empty, 4));
    }
}
