//! Ordered threshold sets, optionally with a subset pinned by the user.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Domain;

/// Strictly increasing thresholds `t_1 < ... < t_K`. `fixed` lists the
/// thresholds that optimizers must keep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub struct ThresholdSet {
    thresholds: Vec<f64>,
    fixed: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdRepr {
    thresholds: Vec<f64>,
    #[serde(default)]
    fixed: Vec<f64>,
}

impl TryFrom<ThresholdRepr> for ThresholdSet {
    type Error = Error;

    fn try_from(r: ThresholdRepr) -> Result<Self> {
        ThresholdSet::with_fixed(r.thresholds, r.fixed)
    }
}

impl From<ThresholdSet> for ThresholdRepr {
    fn from(t: ThresholdSet) -> Self {
        ThresholdRepr {
            thresholds: t.thresholds,
            fixed: t.fixed,
        }
    }
}

fn check_increasing(v: &[f64], what: &str) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidThresholds(format!("non-finite {what} {x}")));
    }
    for w in v.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidThresholds(format!(
                "{what}s must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

impl ThresholdSet {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        Self::with_fixed(thresholds, Vec::new())
    }

    pub fn with_fixed(thresholds: Vec<f64>, mut fixed: Vec<f64>) -> Result<Self> {
        check_increasing(&thresholds, "threshold")?;
        fixed.sort_by(f64::total_cmp);
        check_increasing(&fixed, "fixed threshold")?;
        if let Some(f) = fixed.iter().find(|f| !thresholds.contains(f)) {
            return Err(Error::InvalidThresholds(format!(
                "fixed threshold {f} is not among the thresholds"
            )));
        }
        Ok(Self { thresholds, fixed })
    }

    /// Sorts `thresholds` first; duplicates are still an error.
    pub fn from_unsorted(mut thresholds: Vec<f64>, fixed: Vec<f64>) -> Result<Self> {
        thresholds.sort_by(f64::total_cmp);
        Self::with_fixed(thresholds, fixed)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn fixed(&self) -> &[f64] {
        &self.fixed
    }

    pub fn is_fixed(&self, x: f64) -> bool {
        self.fixed.contains(&x)
    }

    /// Thresholds not pinned by the user.
    pub fn free(&self) -> Vec<f64> {
        self.thresholds
            .iter()
            .copied()
            .filter(|x| !self.is_fixed(*x))
            .collect()
    }

    /// Checks `lower < t_1` and `t_K < upper`.
    pub fn validate_for(&self, domain: &Domain) -> Result<()> {
        if let (Some(&first), Some(&last)) = (self.thresholds.first(), self.thresholds.last()) {
            if !(domain.lower() < first && last < domain.upper()) {
                return Err(Error::InvalidThresholds(format!(
                    "thresholds must lie strictly inside ({}, {})",
                    domain.lower(),
                    domain.upper()
                )));
            }
        }
        Ok(())
    }

    /// Thresholds rounded up to integers, as reported for CGM data.
    pub fn rounded_up(&self) -> Vec<f64> {
        self.thresholds.iter().map(|x| x.ceil()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unordered_and_duplicates() {
        assert!(ThresholdSet::new(vec![2.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![f64::NAN]).is_err());
        assert!(ThresholdSet::from_unsorted(vec![2.0, 1.0], vec![]).is_ok());
    }

    #[test]
    fn fixed_must_be_subset() {
        assert!(ThresholdSet::with_fixed(vec![1.0, 2.0], vec![3.0]).is_err());
        let t = ThresholdSet::with_fixed(vec![1.0, 2.0, 3.0], vec![2.0]).unwrap();
        assert_eq!(t.free(), vec![1.0, 3.0]);
        assert!(t.is_fixed(2.0));
    }

    #[test]
    fn domain_check_is_strict() {
        let d = Domain::new(0.0, 1.0).unwrap();
        assert!(ThresholdSet::new(vec![0.0]).unwrap().validate_for(&d).is_err());
        assert!(ThresholdSet::new(vec![1.0]).unwrap().validate_for(&d).is_err());
        assert!(ThresholdSet::new(vec![0.5]).unwrap().validate_for(&d).is_ok());
        assert!(ThresholdSet::empty().validate_for(&d).is_ok());
    }

    #[test]
    fn rounding_up() {
        let t = ThresholdSet::new(vec![73.2, 186.0]).unwrap();
        assert_eq!(t.rounded_up(), vec![74.0, 186.0]);
    }
}
