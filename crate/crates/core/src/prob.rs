//! Probability vectors over `N` classes.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted by [`ProbVector::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A non-negative vector whose entries sum to one.
///
/// Used for targets, predictions and the per-class confidence vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates `entries` against the simplex within [`SIMPLEX_TOLERANCE`].
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        check_simplex(&entries, SIMPLEX_TOLERANCE)?;
        Ok(ProbVector(entries))
    }

    /// Normalizes non-negative weights by their sum.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NotOnSimplex("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::NotOnSimplex("weights sum to zero".into()));
        }
        Ok(ProbVector(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(num_classes: usize) -> Self {
        ProbVector(vec![1.0 / num_classes as f64; num_classes])
    }

    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        ProbVector(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        ProbVector::new(entries)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.0
    }
}

pub(crate) fn check_simplex(entries: &[f64], tolerance: f64) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::NotOnSimplex("empty vector".into()));
    }
    if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::NotOnSimplex(format!("entry {bad} is negative or not finite")));
    }
    let total: f64 = entries.iter().sum();
    if (total - 1.0).abs() > tolerance {
        return Err(Error::NotOnSimplex(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Index of the maximum, first occurrence wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_simplex() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(ProbVector::uniform(3).argmax(), 0);
    }

    #[test]
    fn serde_validates() {
        let p: ProbVector = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<ProbVector>("[0.5,0.75]").is_err());
    }
}
