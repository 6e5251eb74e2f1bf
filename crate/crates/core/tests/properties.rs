//! Randomized invariants of the learner, controller and Monte Carlo draws.

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use dual_control::controller::blended_control;
use dual_control::harness::montecarlo::replica_schedule;
use dual_control::harness::ExperimentConfig;
use dual_control::learner::{is_psd, prediction_variance, LearnerState, Prediction};

fn step_strategy() -> impl Strategy<Value = (f64, f64, f64, bool)> {
    (
        -3.0..3.0f64,
        -3.0..3.0f64,
        -5.0..5.0f64,
        prop::bool::weighted(0.05),
    )
}

proptest! {
    #[test]
    fn learner_stays_normalized_and_psd(
        thetas in prop::collection::vec((0.5..1.5f64, 0.5..1.5f64, -1.0..1.0f64), 1..40),
        steps in prop::collection::vec(step_strategy(), 1..120),
        sigma2 in 1e-6..1.0f64,
    ) {
        let mut l = LearnerState::new(thetas.len(), Matrix3::identity(), sigma2).unwrap();
        for (f, gu, y, reset) in steps {
            let phi = Vector3::new(f, gu, 1.0);
            let preds: Vec<Prediction> = thetas
                .iter()
                .zip(l.covariances())
                .map(|(&(a, b, c), p)| {
                    let y_hat = a * f + b * gu + c;
                    Prediction { regressor: phi, y_hat, residual: y - y_hat, variance: prediction_variance(&phi, p, sigma2).unwrap() }
                })
                .collect();
            l.observe(&preds).unwrap();
            prop_assert!((l.posteriors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(l.posteriors().iter().all(|p| (0.0..=1.0).contains(p)));
            if reset {
                l.reset();
                prop_assert!(l.posteriors().iter().all(|&p| p == l.eta()));
            }
            l.update_covariances();
            prop_assert!(l.covariances().iter().all(is_psd));
        }
    }

    #[test]
    fn blend_is_a_convex_combination(
        pairs in prop::collection::vec((0.001..1.0f64, -100.0..100.0f64), 1..60),
    ) {
        let total: f64 = pairs.iter().map(|p| p.0).sum();
        let pi: Vec<f64> = pairs.iter().map(|p| p.0 / total).collect();
        let u: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let d = blended_control(&pi, &u, None).unwrap();
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(d.u >= lo - 1e-9 && d.u <= hi + 1e-9);
        prop_assert_eq!(d.u, d.applied);
    }

    #[test]
    fn clamp_bounds_the_applied_input(u in prop::collection::vec(-1e3..1e3f64, 1..20), c in 0.1..100.0f64) {
        let pi = vec![1.0 / u.len() as f64; u.len()];
        let d = blended_control(&pi, &u, Some(c)).unwrap();
        prop_assert!(d.applied.abs() <= c);
        prop_assert_eq!(d.clamped, d.u.abs() > c);
    }

    #[test]
    fn replica_draws_respect_bounds(seed in any::<u64>()) {
        let e = ExperimentConfig::load_or_bundled("case3g-eps01").unwrap().resolve().unwrap();
        let s = replica_schedule(&e, seed);
        let d = s.at(1).unwrap();
        prop_assert!((-1.45..=0.55).contains(&d.gamma));
        prop_assert_eq!((d.alpha, d.beta), (1.0, 1.0));
        prop_assert_eq!(s.at(600).unwrap(), d);
    }
}
