//! Bundled scenario timelines checked at every iteration against
//! independently written piecewise functions.

use dual_control::grid::Disturbance;
use dual_control::harness::{Experiment, ExperimentConfig};

fn exp(name: &str) -> Experiment {
    ExperimentConfig::load_or_bundled(name)
        .unwrap()
        .resolve()
        .unwrap()
}

struct Timeline {
    config: &'static str,
    truth: fn(usize) -> Disturbance,
    reference: fn(usize) -> f64,
    changes: &'static [usize],
}

fn case1_truth(k: usize) -> Disturbance {
    let alpha = match k {
        1..=84 => 1.0,
        85..=179 => 1.11,
        180..=339 => 0.78,
        340..=519 => 0.91,
        _ => 1.18,
    };
    let beta = match k {
        1..=179 => 0.9,
        180..=339 => 0.82,
        _ => 1.0,
    };
    Disturbance::new(alpha, beta, 0.0)
}

fn case2_truth(k: usize) -> Disturbance {
    let gamma = match k {
        1..=199 => -0.2,
        200..=399 => 0.32,
        400..=499 => -0.85,
        _ => 0.5,
    };
    Disturbance::new(1.0, 1.0, gamma)
}

fn case2_reference(k: usize) -> f64 {
    match k {
        0..=149 => 1.0,
        150..=299 => -1.0,
        300..=449 => 1.0,
        _ => -1.0,
    }
}

fn case4_truth(k: usize) -> Disturbance {
    let alpha = match k {
        1..=99 => 1.0,
        100..=249 => 1.05,
        250..=349 => 0.95,
        350..=499 => 0.92,
        _ => 0.95,
    };
    let beta = match k {
        1..=99 => 1.0,
        100..=349 => 0.9,
        350..=499 => 1.0,
        _ => 1.15,
    };
    let gamma = match k {
        1..=349 => 0.0,
        350..=499 => -12.5,
        _ => -2.25,
    };
    Disturbance::new(alpha, beta, gamma)
}

const TIMELINES: &[Timeline] = &[
    Timeline {
        config: "case1",
        truth: case1_truth,
        reference: |k| (5.0 * std::f64::consts::PI * k as f64 / 600.0).cos(),
        changes: &[85, 180, 340, 520],
    },
    Timeline {
        config: "case2",
        truth: case2_truth,
        reference: case2_reference,
        changes: &[200, 400, 500],
    },
    Timeline {
        config: "case4",
        truth: case4_truth,
        reference: |k| 270.0 + 50.0 / (1.0 + (-2.0 * k as f64).exp()),
        changes: &[100, 250, 350, 500],
    },
];

#[test]
fn disturbance_timelines_are_exact() {
    for t in TIMELINES {
        let e = exp(t.config);
        for k in 1..=e.iterations {
            assert_eq!(
                e.schedule.at(k).unwrap(),
                (t.truth)(k),
                "{} at k={k}",
                t.config
            );
        }
        assert!(e.schedule.at(0).is_err());
        assert!(e.schedule.at(e.iterations + 1).is_err());
        assert_eq!(e.schedule.change_points(), t.changes, "{}", t.config);
    }
}

#[test]
fn references_match_closed_forms() {
    for t in TIMELINES {
        let e = exp(t.config);
        // the loop reads one step past the horizon
        for k in 1..=e.iterations + 1 {
            let want = (t.reference)(k);
            let got = e.reference.at(k).unwrap();
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "{} at k={k}: {got} vs {want}",
                t.config
            );
        }
    }
}

#[test]
fn sweep_variants_share_the_base_timeline() {
    for (base, variants) in [
        (
            "case1",
            [
                "case3-eps005",
                "case3-eps0075",
                "case3-eps01",
                "case3-eps02",
            ],
        ),
        (
            "case2",
            [
                "case3g-eps005",
                "case3g-eps01",
                "case3g-eps02",
                "case3g-eps04",
            ],
        ),
    ] {
        let b = exp(base);
        for v in variants {
            let e = exp(v);
            assert_eq!(e.schedule, b.schedule, "{v}");
            assert_eq!(e.reference, b.reference, "{v}");
            assert!(!e.randomize.is_empty(), "{v}");
        }
    }
}

#[test]
fn sweep_grid_sizes() {
    let sizes: Vec<(&str, usize)> = [
        "case3-eps005",
        "case3-eps0075",
        "case3-eps01",
        "case3-eps02",
        "case3g-eps005",
        "case3g-eps01",
        "case3g-eps02",
        "case3g-eps04",
        "case1",
        "case2",
        "case4",
    ]
    .iter()
    .map(|n| (*n, exp(n).grid.size()))
    .collect();
    assert_eq!(
        sizes,
        vec![
            ("case3-eps005", 60),
            ("case3-eps0075", 28),
            ("case3-eps01", 15),
            ("case3-eps02", 6),
            ("case3g-eps005", 40),
            ("case3g-eps01", 20),
            ("case3g-eps02", 10),
            ("case3g-eps04", 5),
            ("case1", 15),
            ("case2", 20),
            ("case4", 105),
        ]
    );
}
