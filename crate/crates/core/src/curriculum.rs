//! Confidence-ranked curriculum: a ranking threshold `mu` that starts at the
//! score admitting the easiest `r` fraction of samples and falls linearly by
//! `beta = mu0 / e` per epoch, reaching zero at the ending epoch `e`.
//! Samples scoring below the current threshold contribute no loss.

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceKind;
use crate::error::{Error, Result};

/// Threshold admitting the top `ceil(r * n)` scores; ties at the cut are all admitted.
pub fn initial_threshold(scores: &[f64], easy_ratio: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("scores", "no scores to rank"));
    }
    if !(easy_ratio > 0.0 && easy_ratio <= 1.0) {
        return Err(Error::invalid("easy_ratio", format!("{easy_ratio} is outside (0, 1]")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid("scores", format!("non-finite score {bad}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // 1e-9 keeps 0.3 * 10 from rounding up to rank 4
    let rank = ((easy_ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// `beta = mu0 / e`.
pub fn update_factor(mu0: f64, end_epoch: usize) -> Result<f64> {
    if end_epoch < 1 {
        return Err(Error::invalid("end_epoch", "must be at least 1"));
    }
    Ok(mu0 / end_epoch as f64)
}

/// Loss kept when `score >= mu`, zero otherwise.
pub fn gate_loss(sample_loss: f64, score: f64, mu: f64) -> f64 {
    if score >= mu {
        sample_loss
    } else {
        0.0
    }
}

pub fn included_fraction(scores: &[f64], mu: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s >= mu).count() as f64 / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    mu: f64,
    mu_initial: f64,
    beta: f64,
    easy_ratio: f64,
    end_epoch: usize,
    steps: usize,
    criterion: ConfidenceKind,
}

impl CurriculumSchedule {
    /// Builds the schedule from the training-set scores of `criterion`.
    pub fn from_scores(
        scores: &[f64],
        easy_ratio: f64,
        end_epoch: usize,
        criterion: ConfidenceKind,
    ) -> Result<Self> {
        let mu0 = initial_threshold(scores, easy_ratio)?;
        let mut schedule = Self::with_threshold(mu0, end_epoch, criterion)?;
        schedule.easy_ratio = easy_ratio;
        Ok(schedule)
    }

    /// Starts from an explicit `mu0`, with `easy_ratio` recorded as 1.
    pub fn with_threshold(mu0: f64, end_epoch: usize, criterion: ConfidenceKind) -> Result<Self> {
        if !(mu0.is_finite() && mu0 >= 0.0) {
            return Err(Error::invalid("mu0", format!("{mu0} must be finite and >= 0")));
        }
        let beta = update_factor(mu0, end_epoch)?;
        Ok(CurriculumSchedule {
            mu: mu0,
            mu_initial: mu0,
            beta,
            easy_ratio: 1.0,
            end_epoch,
            steps: 0,
            criterion,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mu_initial(&self) -> f64 {
        self.mu_initial
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn easy_ratio(&self) -> f64 {
        self.easy_ratio
    }

    pub fn end_epoch(&self) -> usize {
        self.end_epoch
    }

    pub fn criterion(&self) -> ConfidenceKind {
        self.criterion
    }

    /// Number of `advance` calls so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One epoch boundary: `mu <- max(mu - beta, 0)`.
    ///
    /// Evaluated as `mu0 - k * beta` after `k` steps so the sequence does not
    /// accumulate rounding, and pinned to exactly zero from step `e` on.
    pub fn advance(&mut self) {
        self.steps += 1;
        self.mu = if self.steps >= self.end_epoch {
            0.0
        } else {
            (self.mu_initial - self.steps as f64 * self.beta).max(0.0)
        };
    }

    pub fn included_fraction(&self, scores: &[f64]) -> f64 {
        included_fraction(scores, self.mu)
    }

    pub fn admits(&self, score: f64) -> bool {
        score >= self.mu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tenths() -> Vec<f64> {
        (1..=10).map(|i| i as f64 / 10.0).collect()
    }

    #[test]
    fn threshold_from_ratio() {
        assert_eq!(initial_threshold(&tenths(), 0.3).unwrap(), 0.8);
        assert_eq!(initial_threshold(&tenths(), 1.0).unwrap(), 0.1);
        assert_eq!(initial_threshold(&[0.4; 7], 0.2).unwrap(), 0.4);
        assert_eq!(included_fraction(&[0.4; 7], 0.4), 1.0);
        assert!(initial_threshold(&[], 0.5).is_err());
        assert!(initial_threshold(&tenths(), 0.0).is_err());
        assert!(initial_threshold(&tenths(), 1.1).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_eq!(update_factor(0.6, 3).unwrap(), 0.6 / 3.0);
        assert!((update_factor(0.6, 3).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(update_factor(0.0, 4).unwrap(), 0.0);
        assert_eq!(update_factor(0.9, 1).unwrap(), 0.9);
        assert!(update_factor(0.9, 0).is_err());
    }

    #[test]
    fn mu_sequence_is_exact() {
        let mut s = CurriculumSchedule::with_threshold(0.6, 3, ConfidenceKind::Human).unwrap();
        let mut seen = vec![s.mu()];
        for _ in 0..5 {
            s.advance();
            seen.push(s.mu());
        }
        assert_eq!(seen, vec![0.6, 0.4, 0.2, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_beta_is_fixed_point() {
        let mut s = CurriculumSchedule::with_threshold(0.0, 5, ConfidenceKind::Model).unwrap();
        for _ in 0..10 {
            s.advance();
            assert_eq!(s.mu(), 0.0);
        }
    }

    #[test]
    fn end_epoch_one_admits_everything_after_first_epoch() {
        let mut s = CurriculumSchedule::with_threshold(0.9, 1, ConfidenceKind::Model).unwrap();
        assert_eq!(s.beta(), 0.9);
        s.advance();
        assert_eq!(s.mu(), 0.0);
    }

    #[test]
    fn gating() {
        assert_eq!(gate_loss(0.7, 0.9, 0.5), 0.7);
        assert_eq!(gate_loss(0.7, 0.4, 0.5), 0.0);
        assert_eq!(gate_loss(0.7, 0.0, 0.0), 0.7);
        assert_eq!(included_fraction(&tenths(), 0.8), 0.3);
        assert_eq!(included_fraction(&tenths(), 0.0), 1.0);
        assert_eq!(included_fraction(&tenths(), 1.5), 0.0);
    }

    #[test]
    fn fraction_grows_to_one() {
        let scores = tenths();
        let mut s = CurriculumSchedule::from_scores(&scores, 0.3, 4, ConfidenceKind::Human).unwrap();
        assert_eq!(s.included_fraction(&scores), 0.3);
        let mut last = 0.0;
        for epoch in 0..8 {
            let f = s.included_fraction(&scores);
            assert!(f >= last);
            if epoch >= 4 {
                assert_eq!(f, 1.0);
            }
            last = f;
            s.advance();
        }
    }
}
