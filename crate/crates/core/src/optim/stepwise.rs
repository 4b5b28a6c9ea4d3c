//! Greedy backward removal (aggregation) and forward addition (splitting)
//! over the shared histogram cutoffs.
//!
//! Removing or inserting one threshold only changes each member's linearized
//! quantile on one probability interval, so candidates are scored by
//! recomputing just those grid points. Accepted steps rebuild the state from
//! scratch, and the final loss is re-evaluated through the public path.

use rayon::prelude::*;

use super::{improves, paa, DiscreteProblem, Method, OptimizationResult, TracePoint};
use crate::error::Result;
use crate::histogram::{Anchor, QuantileSource};
use crate::loss::{row_offsets, sq_dist, Cohort, LossKind, LossSpec, Objective};
use crate::quantile::interp;
use crate::thresholds::ThresholdSet;

/// Number of grid points `u_m = m / (M + 1)` with `u_m <= p`.
pub(crate) fn count_le(p: f64, denom: f64, m: usize) -> usize {
    let mut k = ((p * denom).floor().max(0.0) as usize).min(m);
    while k > 0 && (k as f64 / denom) > p {
        k -= 1;
    }
    while k < m && ((k + 1) as f64 / denom) <= p {
        k += 1;
    }
    k
}

#[derive(Clone, Copy)]
enum Edit {
    /// Drop `t[pos]`.
    Remove(usize),
    /// Insert `x` so that it becomes `t[pos]`.
    Insert(usize, f64),
}

struct Engine<'o, 'c> {
    obj: &'o Objective<'c>,
    n: usize,
    m: usize,
    denom: f64,
    t: Vec<f64>,
    // per member: lower anchor, one per threshold, upper anchor
    anchors: Vec<Vec<Anchor>>,
    grids: Vec<f64>,
    l1_terms: Vec<f64>,
    pair_sq: Vec<f64>,
    offsets: Vec<usize>,
}

struct Scratch {
    cand: Vec<f64>,
    ranges: Vec<(usize, usize)>,
}

impl<'o, 'c> Engine<'o, 'c> {
    fn new(obj: &'o Objective<'c>, t: Vec<f64>) -> Self {
        let n = obj.n();
        let m = obj.m;
        let mut e = Self {
            obj,
            n,
            m,
            denom: (m + 1) as f64,
            t,
            anchors: Vec::new(),
            grids: Vec::new(),
            l1_terms: Vec::new(),
            pair_sq: Vec::new(),
            offsets: row_offsets(n),
        };
        e.rebuild();
        e
    }

    fn rebuild(&mut self) {
        let t = &self.t;
        self.anchors = self
            .obj
            .cohort
            .members()
            .par_iter()
            .map(|mem| {
                let mut a = Vec::with_capacity(t.len() + 2);
                a.push(mem.lower_anchor());
                a.extend(t.iter().map(|&x| mem.anchor(x)));
                a.push(mem.upper_anchor());
                a
            })
            .collect();
        self.grids = self.obj.linearize_all(t);
        let m = self.m;
        match self.obj.kind {
            LossKind::L1 => {
                self.l1_terms = (0..self.n)
                    .map(|i| sq_dist(self.obj.base_row(i), &self.grids[i * m..(i + 1) * m]))
                    .collect();
            }
            LossKind::L2 => {
                let g = &self.grids;
                let n = self.n;
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        ((i + 1)..n)
                            .map(|j| sq_dist(&g[i * m..(i + 1) * m], &g[j * m..(j + 1) * m]))
                            .collect()
                    })
                    .collect();
                self.pair_sq = rows.concat();
            }
            LossKind::L2BrayCurtis => {}
        }
    }

    /// Loss of the current state, identical to the full evaluation.
    fn loss(&self) -> f64 {
        match self.obj.kind {
            LossKind::L1 => self.obj.l1_from_grids(&self.grids),
            LossKind::L2 => self.obj.l2_from_grids(&self.grids),
            LossKind::L2BrayCurtis => self.obj.evaluate(&self.t),
        }
    }

    fn edited(&self, edit: Edit) -> Vec<f64> {
        let mut t = self.t.clone();
        match edit {
            Edit::Remove(pos) => {
                t.remove(pos);
            }
            Edit::Insert(pos, x) => t.insert(pos, x),
        }
        t
    }

    fn fill(&self, row: &mut [f64], lo: &Anchor, hi: &Anchor) -> (usize, usize) {
        let s = count_le(lo.p, self.denom, self.m);
        let e = count_le(hi.p, self.denom, self.m);
        if hi.p > lo.p {
            for (idx, v) in row.iter_mut().enumerate().take(e).skip(s) {
                let u = (idx + 1) as f64 / self.denom;
                *v = interp(lo.above, hi.below, lo.p, hi.p, u);
            }
        }
        (s, e)
    }

    /// Writes member `i`'s edited grid into `row` and returns the changed index range.
    fn edit_member(&self, i: usize, edit: Edit, row: &mut [f64]) -> (usize, usize) {
        let a = &self.anchors[i];
        match edit {
            Edit::Remove(pos) => self.fill(row, &a[pos], &a[pos + 2]),
            Edit::Insert(pos, x) => {
                let mid = self.obj.cohort.members()[i].anchor(x);
                let (s, _) = self.fill(row, &a[pos], &mid);
                let (_, e) = self.fill(row, &mid, &a[pos + 1]);
                (s, e)
            }
        }
    }

    fn candidate_loss(&self, edit: Edit, scratch: &mut Scratch) -> f64 {
        if self.obj.kind == LossKind::L2BrayCurtis {
            return self.obj.evaluate(&self.edited(edit));
        }
        let m = self.m;
        for i in 0..self.n {
            let row = &mut scratch.cand[i * m..(i + 1) * m];
            scratch.ranges[i] = self.edit_member(i, edit, row);
        }
        let loss = match self.obj.kind {
            LossKind::L1 => self.l1_candidate(scratch),
            _ => self.l2_candidate(scratch),
        };
        // restore the scratch grid to the current state
        for (i, &(s, e)) in scratch.ranges.iter().enumerate() {
            scratch.cand[i * m + s..i * m + e].copy_from_slice(&self.grids[i * m + s..i * m + e]);
        }
        loss
    }

    fn l1_candidate(&self, scratch: &Scratch) -> f64 {
        let m = self.m;
        let mut total = 0.0;
        for (i, &(s, e)) in scratch.ranges.iter().enumerate() {
            let b = &self.obj.base_row(i)[s..e];
            let old = sq_dist(b, &self.grids[i * m + s..i * m + e]);
            let new = sq_dist(b, &scratch.cand[i * m + s..i * m + e]);
            total += self.l1_terms[i] - old + new;
        }
        total / (self.n as f64 * self.denom)
    }

    fn l2_candidate(&self, scratch: &Scratch) -> f64 {
        let (n, m) = (self.n, self.m);
        let base = self.obj.base_dist();
        let (g, c) = (&self.grids, &scratch.cand);
        // empty ranges become (usize::MAX, 0) so that min/max give the hull directly
        let ranges: Vec<(usize, usize)> = scratch
            .ranges
            .iter()
            .map(|&(s, e)| if s < e { (s, e) } else { (usize::MAX, 0) })
            .collect();
        let mut total = 0.0;
        for i in 0..n {
            let (si, ei) = ranges[i];
            let gi = &g[i * m..(i + 1) * m];
            let ci = &c[i * m..(i + 1) * m];
            let off = self.offsets[i];
            let pair_sq = &self.pair_sq[off..off + (n - i - 1)];
            let base = &base[off..off + (n - i - 1)];
            for (k, j) in ((i + 1)..n).enumerate() {
                let (sj, ej) = ranges[j];
                let (s, e) = (si.min(sj), ei.max(ej));
                let mut d2 = pair_sq[k];
                if s < e {
                    let gj = &g[j * m + s..j * m + e];
                    let cj = &c[j * m + s..j * m + e];
                    let mut delta = 0.0;
                    for ((&a, &b), (&x, &y)) in ci[s..e].iter().zip(cj).zip(gi[s..e].iter().zip(gj)) {
                        let dn = a - b;
                        let dold = x - y;
                        delta += dn * dn - dold * dold;
                    }
                    d2 = (d2 + delta).max(0.0);
                }
                let diff = base[k] - d2.sqrt();
                total += diff * diff;
            }
        }
        self.obj.pair_scale() * total / self.denom
    }

    /// Scores `edits` (ordered by threshold value) and returns the winner.
    fn best(&self, edits: &[Edit]) -> (usize, f64) {
        let losses: Vec<f64> = edits
            .par_iter()
            .map_init(
                || Scratch {
                    cand: self.grids.clone(),
                    ranges: vec![(0, 0); self.n],
                },
                |scratch, &edit| self.candidate_loss(edit, scratch),
            )
            .collect();
        let mut best = 0;
        for (c, &l) in losses.iter().enumerate().skip(1) {
            if improves(l, losses[best]) {
                best = c;
            }
        }
        (best, losses[best])
    }

    fn apply(&mut self, edit: Edit) {
        self.t = self.edited(edit);
        self.rebuild();
    }
}

/// Starts from all cutoffs and greedily removes the non-fixed threshold whose
/// removal hurts the loss least, until `k` remain.
pub fn stepwise_aggregation(
    cohort: &Cohort,
    k: usize,
    spec: &LossSpec,
    fixed: &ThresholdSet,
) -> Result<OptimizationResult> {
    if spec.kind == LossKind::L2BrayCurtis {
        let mut r = paa::paa_baseline(cohort, k, fixed)?;
        r.method = Method::StepwiseAggregation;
        return Ok(r);
    }
    let prob = DiscreteProblem::new(cohort, k, fixed)?;
    let obj = Objective::new(cohort, spec)?;
    let mut engine = Engine::new(&obj, prob.cutoffs.to_vec());
    let mut trace = vec![TracePoint {
        iteration: 0,
        best_loss: engine.loss(),
    }];
    let mut evaluations = 1u64;
    while engine.t.len() > k {
        let edits: Vec<Edit> = (0..engine.t.len())
            .filter(|&p| !fixed.values().contains(&engine.t[p]))
            .map(Edit::Remove)
            .collect();
        let (winner, _) = engine.best(&edits);
        evaluations += edits.len() as u64;
        engine.apply(edits[winner]);
        trace.push(TracePoint {
            iteration: trace.len(),
            best_loss: engine.loss(),
        });
    }
    let t = ThresholdSet::with_fixed(engine.t.clone(), fixed.values().to_vec())?;
    OptimizationResult::certify(
        cohort,
        t,
        spec,
        Method::StepwiseAggregation,
        evaluations,
        trace,
    )
}

/// Starts from the fixed thresholds and greedily adds the cutoff that lowers
/// the loss most, until there are `k`.
pub fn stepwise_splitting(
    cohort: &Cohort,
    k: usize,
    spec: &LossSpec,
    fixed: &ThresholdSet,
) -> Result<OptimizationResult> {
    let prob = DiscreteProblem::new(cohort, k, fixed)?;
    let obj = Objective::new(cohort, spec)?;
    let mut engine = Engine::new(&obj, fixed.values().to_vec());
    let mut trace = vec![TracePoint {
        iteration: 0,
        best_loss: engine.loss(),
    }];
    let mut evaluations = 1u64;
    while engine.t.len() < k {
        let edits: Vec<Edit> = prob
            .cutoffs
            .iter()
            .filter(|x| !engine.t.contains(x))
            .map(|&x| Edit::Insert(engine.t.partition_point(|&v| v < x), x))
            .collect();
        let (winner, _) = engine.best(&edits);
        evaluations += edits.len() as u64;
        engine.apply(edits[winner]);
        trace.push(TracePoint {
            iteration: trace.len(),
            best_loss: engine.loss(),
        });
    }
    let t = ThresholdSet::with_fixed(engine.t.clone(), fixed.values().to_vec())?;
    OptimizationResult::certify(
        cohort,
        t,
        spec,
        Method::StepwiseSplitting,
        evaluations,
        trace,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{Domain, Histogram};
    use crate::loss::evaluate_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_le_matches_direct_scan() {
        for m in [1usize, 7, 200] {
            let denom = (m + 1) as f64;
            for p in [0.0, 0.1, 0.5, 1.0 / 3.0, 0.999, 1.0, 3.0 / denom, 1e-300] {
                let direct = (1..=m).filter(|&k| k as f64 / denom <= p).count();
                assert_eq!(count_le(p, denom, m), direct, "m={m} p={p}");
            }
        }
    }

    fn random_cohort(seed: u64, n: usize, j: usize) -> Cohort {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Domain::new(0.0, 1.0).unwrap();
        let cutoffs: Vec<f64> = (1..=j).map(|k| k as f64 / (j + 1) as f64).collect();
        let hs = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..=j)
                    .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random() })
                    .collect();
                let s: f64 = w.iter().sum::<f64>().max(1e-9);
                let mut masses: Vec<f64> = w.iter().map(|x| x / s).collect();
                if masses.iter().all(|&x| x == 0.0) {
                    masses[0] = 1.0;
                }
                let tot: f64 = masses.iter().sum();
                masses[j] += 1.0 - tot;
                if masses[j] < 0.0 {
                    masses[j] = 0.0;
                }
                Histogram::new(d, cutoffs.clone(), masses, None).unwrap()
            })
            .collect();
        Cohort::from_histograms(hs).unwrap()
    }

    #[test]
    fn incremental_scores_match_full_evaluation() {
        for seed in 0..6 {
            let c = random_cohort(seed, 6, 9);
            for kind in [LossKind::L1, LossKind::L2] {
                let spec = LossSpec::new(kind, 37).unwrap();
                let obj = Objective::new(&c, &spec).unwrap();
                let t = vec![c.shared_cutoffs().unwrap()[2], c.shared_cutoffs().unwrap()[6]];
                let engine = Engine::new(&obj, t.clone());
                let mut scratch = Scratch {
                    cand: engine.grids.clone(),
                    ranges: vec![(0, 0); c.len()],
                };
                let edits = [
                    Edit::Remove(0),
                    Edit::Remove(1),
                    Edit::Insert(0, 0.05),
                    Edit::Insert(1, 0.4),
                    Edit::Insert(2, 0.95),
                ];
                for edit in edits {
                    let fast = engine.candidate_loss(edit, &mut scratch);
                    let ts = ThresholdSet::new(engine.edited(edit)).unwrap();
                    let full = evaluate_loss(&c, &ts, &spec).unwrap();
                    assert!(
                        (fast - full).abs() <= 1e-12 * full.abs().max(1e-12),
                        "{kind:?} seed {seed}: {fast} vs {full}"
                    );
                }
                assert_eq!(scratch.cand, engine.grids);
            }
        }
    }

    #[test]
    fn full_resolution_is_zero_loss() {
        let c = random_cohort(3, 5, 8);
        let r = stepwise_aggregation(&c, 8, &LossSpec::l2(), &ThresholdSet::empty()).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.thresholds.values(), c.shared_cutoffs().unwrap());
    }

    #[test]
    fn splitting_from_nothing_with_k_zero() {
        let c = random_cohort(4, 5, 8);
        let r = stepwise_splitting(&c, 0, &LossSpec::l1(), &ThresholdSet::empty()).unwrap();
        assert!(r.thresholds.is_empty());
    }

    #[test]
    fn fixed_thresholds_survive() {
        let c = random_cohort(5, 5, 10);
        let s = c.shared_cutoffs().unwrap().to_vec();
        let fixed = ThresholdSet::new(vec![s[3]]).unwrap();
        for r in [
            stepwise_aggregation(&c, 2, &LossSpec::l1(), &fixed).unwrap(),
            stepwise_splitting(&c, 2, &LossSpec::l2(), &fixed).unwrap(),
        ] {
            assert!(r.thresholds.values().contains(&s[3]));
            assert_eq!(r.thresholds.len(), 2);
        }
    }
}
