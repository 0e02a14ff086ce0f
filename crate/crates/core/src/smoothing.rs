//! Target construction: one-hot, uniform label smoothing, and the
//! confidence-weighted variants, plus soft-target cross-entropy.
//!
//! The confidence variants replace the scalar smoothing factor `alpha` with a
//! per-class factor `alpha_n = clamp(alpha + gamma * c_n, 0, 1)` where `c` is
//! either the baseline model's softmax output (model confidence) or the
//! raters' vote distribution (human confidence). Per-class factors move a
//! different amount of mass per class, so the result is renormalized by its
//! sum. When every factor is equal the uniform formula already sums to one
//! and is returned untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbVector;

/// Predictions are clamped to this floor before taking the log.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Base smoothing factor, in `[0, 1)`.
    pub alpha: f64,
    /// Weight of the confidence vector, `>= 0`.
    pub gamma: f64,
}

impl SmoothingConfig {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let cfg = SmoothingConfig { alpha, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("{} must be finite and >= 0", self.gamma)));
        }
        Ok(())
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { alpha: 0.1, gamma: 0.1 }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} is outside [0, 1)")));
    }
    Ok(())
}

pub fn one_hot(class: usize, num_classes: usize) -> Result<ProbVector> {
    if class >= num_classes {
        return Err(Error::ClassOutOfRange { class, num_classes });
    }
    let mut v = vec![0.0; num_classes];
    v[class] = 1.0;
    Ok(ProbVector::from_raw(v))
}

/// `p_n (1 - alpha) + alpha / N`.
pub fn uniform_smooth(p: &ProbVector, alpha: f64) -> Result<ProbVector> {
    check_alpha(alpha)?;
    let n = p.len() as f64;
    Ok(ProbVector::from_raw(p.iter().map(|&pn| pn * (1.0 - alpha) + alpha / n).collect()))
}

/// Smoothing driven by the baseline model's per-class confidence `m`.
pub fn mc_smooth(p: &ProbVector, m: &ProbVector, cfg: &SmoothingConfig) -> Result<ProbVector> {
    confidence_smooth(p, m, cfg)
}

/// Smoothing driven by the raters' per-class confidence `h`.
pub fn hc_smooth(p: &ProbVector, h: &ProbVector, cfg: &SmoothingConfig) -> Result<ProbVector> {
    confidence_smooth(p, h, cfg)
}

/// Per-class factors `clamp(alpha + gamma * c_n, 0, 1)`.
pub fn per_class_factors(confidence: &ProbVector, cfg: &SmoothingConfig) -> Vec<f64> {
    confidence.iter().map(|&c| (cfg.alpha + cfg.gamma * c).clamp(0.0, 1.0)).collect()
}

fn confidence_smooth(p: &ProbVector, confidence: &ProbVector, cfg: &SmoothingConfig) -> Result<ProbVector> {
    cfg.validate()?;
    if p.len() != confidence.len() {
        return Err(Error::LengthMismatch { expected: p.len(), actual: confidence.len() });
    }
    let n = p.len() as f64;
    let factors = per_class_factors(confidence, cfg);
    let raw: Vec<f64> = p.iter().zip(&factors).map(|(&pn, &a)| pn * (1.0 - a) + a / n).collect();
    if factors.iter().all(|&a| a == factors[0]) {
        return Ok(ProbVector::from_raw(raw));
    }
    let total: f64 = raw.iter().sum();
    Ok(ProbVector::from_raw(raw.into_iter().map(|v| v / total).collect()))
}

/// `-sum_n target_n ln(max(pred_n, LOG_EPSILON))`, in nats.
pub fn cross_entropy(target: &ProbVector, pred: &ProbVector) -> Result<f64> {
    cross_entropy_slice(target.as_slice(), pred.as_slice())
}

pub(crate) fn cross_entropy_slice(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::LengthMismatch { expected: target.len(), actual: pred.len() });
    }
    Ok(target
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, q)| -t * q.max(LOG_EPSILON).ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn one_hot_bounds() {
        assert_eq!(one_hot(0, 3).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(one_hot(2, 3).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        assert!(matches!(one_hot(3, 3), Err(Error::ClassOutOfRange { .. })));
    }

    #[test]
    fn uniform_examples() {
        let s = uniform_smooth(&one_hot(0, 10).unwrap(), 0.1).unwrap();
        let mut expected = vec![0.01; 10];
        expected[0] = 0.91;
        assert!(close(s.as_slice(), &expected, 1e-15));

        let p = pv(&[0.2, 0.3, 0.5]);
        assert_eq!(uniform_smooth(&p, 0.0).unwrap(), p);

        let s = uniform_smooth(&one_hot(0, 2).unwrap(), 0.5).unwrap();
        assert_eq!(s.as_slice(), &[0.75, 0.25]);

        assert!(uniform_smooth(&p, 1.0).is_err());
        assert!(uniform_smooth(&p, -0.1).is_err());
    }

    #[test]
    fn mc_examples() {
        let p = one_hot(0, 2).unwrap();
        let m = pv(&[0.7, 0.3]);
        let cfg = SmoothingConfig::new(0.1, 0.2).unwrap();
        assert!(close(&per_class_factors(&m, &cfg), &[0.24, 0.16], 1e-15));
        let out = mc_smooth(&p, &m, &cfg).unwrap();
        // raw = [0.88, 0.08]
        assert!(close(out.as_slice(), &[0.88 / 0.96, 0.08 / 0.96], 1e-12));
        assert!(close(out.as_slice(), &[0.9167, 0.0833], 5e-5));

        let zero_gamma = SmoothingConfig::new(0.1, 0.0).unwrap();
        assert_eq!(mc_smooth(&p, &m, &zero_gamma).unwrap(), uniform_smooth(&p, 0.1).unwrap());

        let p3 = pv(&[0.6, 0.3, 0.1]);
        let uniform_m = ProbVector::uniform(3);
        let out = mc_smooth(&p3, &uniform_m, &cfg).unwrap();
        let expected = uniform_smooth(&p3, 0.1 + 0.2 / 3.0).unwrap();
        assert!(close(out.as_slice(), expected.as_slice(), 1e-12));

        assert!(matches!(mc_smooth(&p, &ProbVector::uniform(3), &cfg), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn hc_examples() {
        let p = one_hot(0, 2).unwrap();
        let h = one_hot(0, 2).unwrap();
        let cfg = SmoothingConfig::new(0.0, 0.5).unwrap();
        assert_eq!(per_class_factors(&h, &cfg), vec![0.5, 0.0]);
        assert_eq!(hc_smooth(&p, &h, &cfg).unwrap().as_slice(), &[1.0, 0.0]);

        let h = pv(&[0.8, 0.2]);
        let cfg = SmoothingConfig::new(0.1, 0.1).unwrap();
        let out = hc_smooth(&p, &h, &cfg).unwrap();
        // factors [0.18, 0.12], raw [0.91, 0.06]
        assert!(close(out.as_slice(), &[0.91 / 0.97, 0.06 / 0.97], 1e-12));
        assert!(close(out.as_slice(), &[0.9381, 0.0619], 5e-5));

        let zero_gamma = SmoothingConfig::new(0.3, 0.0).unwrap();
        assert_eq!(hc_smooth(&p, &h, &zero_gamma).unwrap(), uniform_smooth(&p, 0.3).unwrap());
    }

    #[test]
    fn large_gamma_clamps() {
        let p = one_hot(1, 3).unwrap();
        let h = pv(&[0.1, 0.8, 0.1]);
        let cfg = SmoothingConfig::new(0.5, 5.0).unwrap();
        assert_eq!(per_class_factors(&h, &cfg), vec![1.0, 1.0, 1.0]);
        let out = hc_smooth(&p, &h, &cfg).unwrap();
        assert!(close(out.as_slice(), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn cross_entropy_examples() {
        let target = one_hot(1, 3).unwrap();
        let pred = pv(&[0.25, 0.5, 0.25]);
        assert!((cross_entropy(&target, &pred).unwrap() - 2f64.ln()).abs() < 1e-15);

        let u = ProbVector::uniform(7);
        assert!((cross_entropy(&u, &u).unwrap() - 7f64.ln()).abs() < 1e-12);

        let smoothed = uniform_smooth(&one_hot(0, 10).unwrap(), 0.1).unwrap();
        let ce = cross_entropy(&smoothed, &ProbVector::uniform(10)).unwrap();
        assert!((ce - 10f64.ln()).abs() < 1e-12);

        let zero_pred = pv(&[1.0, 0.0]);
        let ce = cross_entropy(&one_hot(1, 2).unwrap(), &zero_pred).unwrap();
        assert!((ce - (-(LOG_EPSILON.ln()))).abs() < 1e-9);

        assert!(cross_entropy(&u, &ProbVector::uniform(3)).is_err());
    }
}
