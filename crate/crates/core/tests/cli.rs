//! The `dualctl` binary.

use std::process::{Command, Output};

fn dualctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn partition_prints_midpoints() {
    let o = dualctl(&[
        "partition",
        "--lower",
        "-0.05",
        "--upper",
        "0.05",
        "--eps",
        "0.1",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("s = 1\n"), "{text}");

    let o = dualctl(&[
        "partition",
        "--lower",
        "0.75",
        "--upper",
        "1.25",
        "--eps",
        "0.1",
    ]);
    let text = stdout(&o);
    assert!(text.contains("s = 5\n"), "{text}");
    assert!(
        text.contains("midpoints = 0.8, 0.9, 1, 1.1, 1.2\n"),
        "{text}"
    );
}

#[test]
fn partition_rejects_bad_interval() {
    let o = dualctl(&["partition", "--lower", "1", "--upper", "0", "--eps", "0.1"]);
    assert!(!o.status.success());
}

#[test]
fn run_is_deterministic_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = dualctl(&[
            "run",
            "--config",
            "case2",
            "--seed",
            "4",
            "--full-posteriors",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 601);
}

#[test]
fn mc_prints_a_summary() {
    let o = dualctl(&[
        "mc",
        "--config",
        "case3g-eps04",
        "--runs",
        "4",
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for key in [
        "config = case3g-eps04",
        "candidates = 5",
        "runs = 4 (0 excluded)",
        "J_M = ",
        "norm_index = ",
        "t_r = ",
    ] {
        assert!(text.contains(key), "missing `{key}` in\n{text}");
    }
}

#[test]
fn unknown_config_fails_cleanly() {
    let o = dualctl(&["run", "--config", "no-such-case"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-case"));
}

#[test]
fn samples_and_train_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.csv");
    let net = dir.path().join("n.rbf");
    let o = dualctl(&[
        "samples",
        "--plant",
        "affine-case1",
        "--count",
        "800",
        "--x-min",
        "-2",
        "--x-max",
        "2",
        "--u-min",
        "-1",
        "--u-max",
        "1",
        "--seed",
        "3",
        "--out",
        samples.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dualctl(&[
        "train",
        "--samples",
        samples.to_str().unwrap(),
        "--f-centers",
        "-2:2:0.5",
        "--f-width",
        "1",
        "--g-centers",
        "-2,0,2",
        "--g-width",
        "3.6",
        "--out",
        net.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rms: f64 = stdout(&o)
        .trim()
        .strip_prefix("residual rms = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(rms < 0.05, "rms {rms}");
    let parsed = dual_control::rbf::RbfNetwork::load(&net).unwrap();
    assert_eq!(parsed.f_branch().len(), 9);
    assert_eq!(parsed.g_branch().len(), 3);
}
