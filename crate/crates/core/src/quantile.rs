//! Quantile functions evaluated on the uniform grid `u_m = m / (M + 1)`,
//! either directly or after piecewise-linear interpolation at thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::QuantileSource;
use crate::thresholds::ThresholdSet;

/// Default number of grid points.
pub const DEFAULT_GRID_SIZE: usize = 200;

/// Values of a quantile function at `u_1, ..., u_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGridSize);
        }
        Ok(Self { values })
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The probabilities `u_m` matching each value.
    pub fn probabilities(&self) -> Vec<f64> {
        let m = self.values.len();
        (1..=m).map(|i| grid_probability(i, m)).collect()
    }
}

/// `u_m = m / (M + 1)`.
pub fn grid_probability(m: usize, grid_size: usize) -> f64 {
    m as f64 / (grid_size + 1) as f64
}

/// Linear interpolation through `(p0, x0)` and `(p1, x1)` at `u`.
///
/// Shared by the base quantile and the linearized quantile so that both
/// produce bit-identical values on the same segment.
#[inline]
pub(crate) fn interp(x0: f64, x1: f64, p0: f64, p1: f64, u: f64) -> f64 {
    x0 + (x1 - x0) * ((u - p0) / (p1 - p0))
}

/// `q(u_m)` for `m = 1..=M`.
pub fn quantile_grid<S: QuantileSource + ?Sized>(source: &S, grid_size: usize) -> Result<QuantileGrid> {
    if grid_size == 0 {
        return Err(Error::InvalidGridSize);
    }
    let mut v = Vec::with_capacity(grid_size);
    source.fill_base_grid(grid_size, &mut v);
    QuantileGrid::new(v)
}

/// The piecewise-linear interpolation of `q` at the knots
/// `(0, q(0+)), (F(t_k), q(F(t_k)))..., (1, q(1))`, evaluated on the grid.
pub fn linearized_quantile_grid<S: QuantileSource + ?Sized>(
    source: &S,
    t: &ThresholdSet,
    grid_size: usize,
) -> Result<QuantileGrid> {
    if grid_size == 0 {
        return Err(Error::InvalidGridSize);
    }
    t.validate_for(&source.domain())?;
    let mut v = Vec::with_capacity(grid_size);
    linearize_into(source, t.values(), grid_size, &mut v);
    QuantileGrid::new(v)
}

/// Writes the linearized grid for thresholds `t` (assumed valid) into `out`.
pub(crate) fn linearize_into<S: QuantileSource + ?Sized>(
    source: &S,
    t: &[f64],
    grid_size: usize,
    out: &mut Vec<f64>,
) {
    out.clear();
    let denom = (grid_size + 1) as f64;
    let mut m = 1usize;
    let mut lo = source.lower_anchor();
    let knots = t
        .iter()
        .map(|&x| source.anchor(x))
        .chain(std::iter::once(source.upper_anchor()));
    for hi in knots {
        if hi.p > lo.p {
            while m <= grid_size {
                let u = m as f64 / denom;
                if u > hi.p {
                    break;
                }
                out.push(interp(lo.above, hi.below, lo.p, hi.p, u));
                m += 1;
            }
        }
        lo = hi;
    }
    // only reachable if the last knot's p rounds below some u_m
    let last = lo.below;
    out.resize(grid_size, last);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{Domain, EmpiricalSample, Histogram};

    fn unit() -> Domain {
        Domain::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_of_uniform() {
        let h = Histogram::new(unit(), vec![], vec![1.0], None).unwrap();
        let g = quantile_grid(&h, 3).unwrap();
        assert_eq!(g.values(), &[0.25, 0.5, 0.75]);
        assert_eq!(g.probabilities(), vec![0.25, 0.5, 0.75]);
        assert!(quantile_grid(&h, 0).is_err());
    }

    #[test]
    fn sample_grid_uses_ceiling_rank() {
        let s = EmpiricalSample::new(unit(), vec![0.1, 0.2, 0.3, 0.4], None).unwrap();
        // u = 0.25, 0.5, 0.75 -> ranks 1, 2, 3
        assert_eq!(quantile_grid(&s, 3).unwrap().values(), &[0.1, 0.2, 0.3]);
        // u = 0.2, 0.4, 0.6, 0.8 -> ranks 1, 2, 3, 4
        assert_eq!(quantile_grid(&s, 4).unwrap().values(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn linearizing_a_uniform_changes_nothing() {
        let h = Histogram::new(unit(), vec![], vec![1.0], None).unwrap();
        let t = ThresholdSet::new(vec![0.3]).unwrap();
        let lin = linearized_quantile_grid(&h, &t, 3).unwrap();
        for (a, b) in lin.values().iter().zip([0.25, 0.5, 0.75]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn linearizing_at_every_cutoff_is_exact() {
        let h = Histogram::new(
            unit(),
            vec![0.1, 0.2, 0.5, 0.6, 0.9],
            vec![0.1, 0.0, 0.4, 0.0, 0.5, 0.0],
            None,
        )
        .unwrap();
        let t = ThresholdSet::new(h.cutoffs().to_vec()).unwrap();
        for m in [1, 7, 200, 999] {
            let base = quantile_grid(&h, m).unwrap();
            let lin = linearized_quantile_grid(&h, &t, m).unwrap();
            assert_eq!(base, lin);
        }
    }

    #[test]
    fn linearization_with_no_thresholds_is_a_single_segment() {
        let h = Histogram::new(unit(), vec![0.5], vec![0.2, 0.8], None).unwrap();
        let lin = linearized_quantile_grid(&h, &ThresholdSet::empty(), 3).unwrap();
        assert_eq!(lin.values(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn linearization_rejects_out_of_domain_thresholds() {
        let h = Histogram::new(unit(), vec![], vec![1.0], None).unwrap();
        let t = ThresholdSet::new(vec![1.5]).unwrap();
        assert!(linearized_quantile_grid(&h, &t, 3).is_err());
    }

    #[test]
    fn sample_linearization_uses_order_statistics() {
        let s = EmpiricalSample::new(unit(), vec![0.1, 0.2, 0.3, 0.4], None).unwrap();
        let t = ThresholdSet::new(vec![0.25]).unwrap();
        // knots: (0, 0.1), (0.5, 0.2), (1, 0.4)
        let lin = linearized_quantile_grid(&s, &t, 3).unwrap();
        let want = [0.15, 0.2, 0.3];
        for (a, b) in lin.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
