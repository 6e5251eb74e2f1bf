//! End-to-end runs through the public API.

use std::sync::Arc;

use nalgebra::Matrix3;

use dual_control::bundled::case1_network;
use dual_control::controller::ControllerConfig;
use dual_control::grid::{BoundedInterval, CandidateGrid};
use dual_control::harness::montecarlo::write_report;
use dual_control::harness::{
    monte_carlo, run_experiment, ConfigError, Experiment, ExperimentConfig, McOptions, Mode,
    RunTrace, TraceOptions,
};
use dual_control::learner::ResetPolicy;
use dual_control::plant::{
    AffinePlant, Channel, DisturbanceSchedule, PlantKind, PlantModel, ReferenceSpec,
};
use dual_control::rbf::RbfNetwork;

/// A plant whose drift and gain are exactly the network's outputs.
struct NetworkPlant(RbfNetwork);

impl AffinePlant for NetworkPlant {
    fn drift(&self, x: &[f64]) -> f64 {
        self.0.eval(x).unwrap().0
    }

    fn gain(&self, x: &[f64]) -> f64 {
        self.0.eval(x).unwrap().1
    }
}

fn perfect_model_experiment() -> Experiment {
    let net = case1_network();
    let plant = PlantModel::new(
        PlantKind::UserDefined(Arc::new(NetworkPlant(net.clone()))),
        0.0,
    )
    .unwrap();
    // one candidate per channel, equal to the constant truth
    let alpha = BoundedInterval::new(0.9, 1.1, 1.0).unwrap();
    let beta = BoundedInterval::new(0.8, 1.2, 1.0).unwrap();
    let gamma = BoundedInterval::new(-0.1, 0.1, 1.0).unwrap();
    let grid = CandidateGrid::from_intervals(&alpha, &beta, &gamma);
    assert_eq!(grid.size(), 1);
    let theta = grid.vectors()[0];
    let schedule = DisturbanceSchedule::new(
        Channel::constant(0.9, 1.1, theta.alpha),
        Channel::constant(0.8, 1.2, theta.beta),
        Channel::constant(-0.1, 0.1, theta.gamma),
        200,
    )
    .unwrap();
    let reference = ReferenceSpec::case1_cosine();
    // certainty-equivalent first input, so tracking is exact from k = 2
    let (f, g) = net.eval(&[0.0]).unwrap();
    let initial_input =
        (reference.at(2).unwrap() - theta.alpha * f - theta.gamma) / (theta.beta * g);
    Experiment {
        name: "perfect".into(),
        iterations: 200,
        seed: 1,
        plant,
        initial_output: 0.0,
        initial_input,
        network: net,
        reference,
        schedule,
        grid,
        controller: ControllerConfig::new(0.9, None).unwrap(),
        reset: ResetPolicy::new(0.08, 0.95).unwrap(),
        initial_covariance: Matrix3::zeros(),
        learner_noise_variance: 1e-12,
        randomize: vec![],
        spike_threshold: 0.1,
    }
}

#[test]
fn perfect_model_tracks_exactly() {
    let e = perfect_model_experiment();
    let r = run_experiment(&e, 3, Mode::Dual, TraceOptions::default()).unwrap();
    for row in &r.trace.rows[1..] {
        assert!(row.err.abs() < 1e-12, "k={} err={}", row.k, row.err);
        assert_eq!(row.max_pi, 1.0);
        assert!(!row.reset);
    }
}

#[test]
fn dual_control_with_perfect_model_matches_benchmark() {
    let e = perfect_model_experiment();
    let r = run_experiment(&e, 3, Mode::Dual, TraceOptions::default()).unwrap();
    for row in &r.trace.rows[1..] {
        assert!(
            (row.u - row.u_opt).abs() <= 1e-9 * row.u_opt.abs().max(1.0),
            "k={}",
            row.k
        );
    }
}

#[test]
fn trace_file_round_trip() {
    let e = ExperimentConfig::load_or_bundled("case2")
        .unwrap()
        .resolve()
        .unwrap();
    let opts = TraceOptions {
        posteriors: true,
        candidate_inputs: true,
    };
    let r = run_experiment(&e, 2, Mode::Dual, opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    r.trace.save(&path).unwrap();
    let back = RunTrace::load(&path).unwrap();
    assert_eq!(back.len(), 600);
    assert_eq!(back.to_csv_string(), r.trace.to_csv_string());
    assert_eq!(back.rows[10], r.trace.rows[10]);
    let header = std::fs::read_to_string(&path).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with(
        "k,y_r,y,u,u_opt,y_hat,err,argmax_t,max_pi,reset,alpha_true,beta_true,gamma_true,pi_1,"
    ));
    assert!(header.ends_with(",u_20"));
}

#[test]
fn user_table_reference_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let table: String = (1..=601)
        .map(|k| format!("{k},{}\n", 0.5 * (k as f64 * 0.1).sin()))
        .collect();
    std::fs::write(dir.path().join("ref.csv"), format!("k,y_r\n{table}")).unwrap();
    let text = dual_control::bundled::config("case1")
        .unwrap()
        .replace(
            "kind = \"cosine\"",
            "kind = \"user_table\"\npath = \"ref.csv\"",
        )
        .replace("amplitude = 1.0\n", "")
        .replace("period = 240.0\n", "");
    let cfg_path = dir.path().join("table.toml");
    std::fs::write(&cfg_path, text).unwrap();
    let e = ExperimentConfig::load(&cfg_path)
        .unwrap()
        .resolve()
        .unwrap();
    let r = run_experiment(&e, 1, Mode::Dual, TraceOptions::default()).unwrap();
    for row in &r.trace.rows {
        assert_eq!(row.y_r, 0.5 * (row.k as f64 * 0.1).sin());
    }
}

#[test]
fn short_reference_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ref.csv"), "1,0.0\n2,0.1\n3,0.2\n").unwrap();
    let text = dual_control::bundled::config("case1")
        .unwrap()
        .replace(
            "kind = \"cosine\"",
            "kind = \"user_table\"\npath = \"ref.csv\"",
        )
        .replace("amplitude = 1.0\n", "")
        .replace("period = 240.0\n", "");
    let cfg_path = dir.path().join("table.toml");
    std::fs::write(&cfg_path, text).unwrap();
    let err = ExperimentConfig::load(&cfg_path)
        .unwrap()
        .resolve()
        .unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { .. }), "{err}");
}

#[test]
fn optimal_benchmark_beats_dual_control() {
    let e = ExperimentConfig::load_or_bundled("case3-eps01")
        .unwrap()
        .resolve()
        .unwrap();
    let opts = |mode| McOptions {
        runs: 20,
        seed_base: 1,
        jobs: 2,
        mode,
    };
    let dual = monte_carlo(&e, &opts(Mode::Dual)).unwrap();
    let optimal = monte_carlo(&e, &opts(Mode::Optimal)).unwrap();
    assert!(optimal.metrics.j_m < dual.metrics.j_m);
    assert!(optimal.metrics.norm_index < dual.metrics.norm_index);

    let mut csv = Vec::new();
    write_report(&dual, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + dual.runs.len());
    assert!(text.starts_with("seed,alpha,beta,gamma,mean_abs_err,rms_err,max_spike,seconds\n1,"));
}

#[test]
fn reset_fires_after_a_disturbance_jump() {
    let e = ExperimentConfig::load_or_bundled("case2")
        .unwrap()
        .resolve()
        .unwrap();
    let r = run_experiment(&e, 1, Mode::Dual, TraceOptions::default()).unwrap();
    for change in [200, 400, 500] {
        let fired = r
            .trace
            .rows
            .iter()
            .any(|row| row.reset && row.k >= change && row.k < change + 10);
        assert!(fired, "no reset within 10 iterations of k={change}");
    }
}
