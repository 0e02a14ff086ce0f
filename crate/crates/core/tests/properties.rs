use std::collections::HashSet;

use confcal::calibration::{ece, reliability_bins};
use confcal::confidence::{human_confidence_scalar, max_human_confidence, ConfidenceKind};
use confcal::curriculum::CurriculumSchedule;
use confcal::dataset::{generate_synthetic, split, test_size, SyntheticConfig};
use confcal::smoothing::{cross_entropy, hc_smooth, mc_smooth, uniform_smooth, SmoothingConfig};
use confcal::ProbVector;
use proptest::prelude::*;

fn prob_vector(n: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.0f64..1.0, n)
        .prop_filter("some mass", |w| w.iter().sum::<f64>() > 1e-6)
        .prop_map(|w| ProbVector::from_weights(w).unwrap())
}

fn sized_prob_vectors() -> impl Strategy<Value = (ProbVector, ProbVector)> {
    (2usize..8).prop_flat_map(|n| (prob_vector(n), prob_vector(n)))
}

fn permute(v: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| v[i]).collect()
}

fn perm_of(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn predictions() -> impl Strategy<Value = (Vec<ProbVector>, Vec<usize>)> {
    (2usize..6, 1usize..40).prop_flat_map(|(classes, n)| {
        (prop::collection::vec(prob_vector(classes), n), prop::collection::vec(0..classes, n))
    })
}

proptest! {
    #[test]
    fn cross_entropy_is_minimised_by_the_target((t, p) in sized_prob_vectors()) {
        let own = cross_entropy(&t, &t).unwrap();
        let other = cross_entropy(&t, &p).unwrap();
        prop_assert!(other >= own - 1e-9, "H(t,p)={other} < H(t,t)={own}");
    }

    #[test]
    fn sigma_is_bounded_and_order_free(
        (dist, perm) in (2usize..12).prop_flat_map(|n| (prob_vector(n), perm_of(n)))
    ) {
        let s = human_confidence_scalar(&dist);
        prop_assert!(s >= 0.0 && s <= max_human_confidence(dist.len()) + 1e-12);
        let shuffled = ProbVector::new(permute(dist.as_slice(), &perm)).unwrap();
        prop_assert!((human_confidence_scalar(&shuffled) - s).abs() < 1e-15);
    }

    #[test]
    fn smoothing_commutes_with_class_relabelling(
        (p, c, perm) in (2usize..8).prop_flat_map(|n| (prob_vector(n), prob_vector(n), perm_of(n))),
        alpha in 0.0f64..1.0,
        gamma in 0.0f64..3.0,
    ) {
        let cfg = SmoothingConfig::new(alpha, gamma).unwrap();
        let pp = ProbVector::new(permute(p.as_slice(), &perm)).unwrap();
        let cp = ProbVector::new(permute(c.as_slice(), &perm)).unwrap();
        for (a, b) in [
            (uniform_smooth(&p, alpha).unwrap(), uniform_smooth(&pp, alpha).unwrap()),
            (mc_smooth(&p, &c, &cfg).unwrap(), mc_smooth(&pp, &cp, &cfg).unwrap()),
            (hc_smooth(&p, &c, &cfg).unwrap(), hc_smooth(&pp, &cp, &cfg).unwrap()),
        ] {
            let a = permute(a.as_slice(), &perm);
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ece_ignores_sample_order(
        (preds, labels, order) in predictions().prop_flat_map(|(p, l)| {
            let n = p.len();
            (Just(p), Just(l), perm_of(n))
        }),
        bins in 1usize..20,
    ) {
        let base = ece(&preds, &labels, bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let p2: Vec<ProbVector> = order.iter().map(|&i| preds[i].clone()).collect();
        let l2: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        prop_assert!((ece(&p2, &l2, bins).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn reliability_bins_partition_the_samples((preds, labels) in predictions(), bins in 1usize..20) {
        let rows = reliability_bins(&preds, &labels, bins).unwrap();
        prop_assert_eq!(rows.len(), bins);
        prop_assert_eq!(rows.iter().map(|b| b.count).sum::<usize>(), preds.len());
        prop_assert_eq!(rows[0].lower, 0.0);
        prop_assert_eq!(rows[bins - 1].upper, 1.0);
        for pair in rows.windows(2) {
            prop_assert_eq!(pair[0].upper, pair[1].lower);
        }
        for b in &rows {
            prop_assert_eq!(b.count == 0, b.avg_confidence.is_none());
            if let Some(c) = b.avg_confidence {
                prop_assert!(c > b.lower - 1e-12 && c <= b.upper + 1e-12);
            }
        }
    }

    #[test]
    fn threshold_never_rises(
        scores in prop::collection::vec(0.0f64..1.0, 1..50),
        ratio in 0.01f64..=1.0,
        end_epoch in 1usize..10,
    ) {
        let mut s = CurriculumSchedule::from_scores(&scores, ratio, end_epoch, ConfidenceKind::Model).unwrap();
        let mut last_mu = s.mu();
        let mut last_frac = s.included_fraction(&scores);
        prop_assert!(last_frac >= ratio - 1e-9);
        for k in 1..=end_epoch + 2 {
            s.advance();
            prop_assert!(s.mu() <= last_mu);
            let frac = s.included_fraction(&scores);
            prop_assert!(frac >= last_frac);
            if k >= end_epoch {
                prop_assert_eq!(frac, 1.0);
            }
            last_mu = s.mu();
            last_frac = frac;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_is_a_partition(per_class in 1usize..15, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let data = generate_synthetic(&SyntheticConfig::new(3, per_class, 2, 5, 0.2, seed)).unwrap();
        let (train, test) = split(&data, fraction, seed).unwrap();
        prop_assert_eq!(test.len(), test_size(data.len(), fraction));
        prop_assert_eq!(train.len() + test.len(), data.len());
        let ids: HashSet<&str> = train.samples().iter().chain(test.samples()).map(|s| s.id.as_str()).collect();
        prop_assert_eq!(ids.len(), data.len());
    }
}
