use std::path::Path;
use std::process::{Command, Output};

use rlpp_core::learning::PolicyBundle;

fn rlpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlpp")).args(args).output().expect("run rlpp")
}

fn ok(args: &[&str]) -> String {
    let out = rlpp(args);
    assert!(out.status.success(), "rlpp {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn non_empty(dir: &Path, files: &[&str]) {
    for f in files {
        let len = std::fs::metadata(dir.join(f)).unwrap_or_else(|_| panic!("missing {f}")).len();
        assert!(len > 0, "{f} is empty");
    }
}

#[test]
fn raceline_writes_geometry_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&["raceline", "--track", "oval", "--out", out]);
    assert!(stdout.contains("oval"));
    non_empty(
        dir.path(),
        &[
            "config.toml",
            "track.csv",
            "raceline.csv",
            "map.pgm",
            "raceline.svg",
            "speed_profile.svg",
            "optimization_log.csv",
        ],
    );
}

#[test]
fn eval_reports_lap_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout =
        ok(&["eval", "--track", "oval", "--strategy", "fixed", "--lookahead", "1.5", "--laps", "2", "--out", out]);
    assert!(stdout.contains("2/2 laps"), "{stdout}");
    non_empty(
        dir.path(),
        &["config.toml", "fixed_trace.csv", "fixed_laps.csv", "fixed_report.csv", "trajectory.svg", "lookahead.svg"],
    );
    let cfg = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(cfg.contains("laps = 2"));
}

#[test]
fn infeasible_eval_is_reported_as_dnf() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout =
        ok(&["eval", "--track", "oval", "--lookahead", "0.5", "--speed-scale", "3", "--laps", "2", "--out", out]);
    assert!(stdout.contains("DNF"), "{stdout}");
}

#[test]
fn sweep_is_sorted_and_includes_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["sweep", "--track", "oval", "--laps", "1", "--scales", "1.5,0.8", "--out", out]);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let scales: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(scales, vec![0.8, 1.0, 1.5]);
    non_empty(dir.path(), &["sweep.svg"]);
}

#[test]
fn learned_strategy_without_policy_fails_cleanly() {
    let out = rlpp(&["eval", "--strategy", "learned", "--laps", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--policy"));
    let out = rlpp(&["compare", "--laps", "1"]);
    assert!(!out.status.success());
}

#[test]
fn invalid_flags_are_rejected() {
    assert!(!rlpp(&["eval", "--laps", "0"]).status.success());
    assert!(!rlpp(&["eval", "--speed-scale", "-1"]).status.success());
    assert!(!rlpp(&["eval", "--strategy", "greedy"]).status.success());
}

#[test]
fn compare_writes_table_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("policy.json");
    PolicyBundle::zeros().save(&policy).unwrap();
    let out = dir.path().join("cmp");
    let stdout = ok(&[
        "compare",
        "--track",
        "oval",
        "--laps",
        "2",
        "--policy",
        policy.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("| fixed |") && stdout.contains("| learned |"), "{stdout}");
    non_empty(
        &out,
        &["comparison.md", "comparison.csv", "trajectory.svg", "lookahead.svg", "speed.svg", "scheduled_trace.csv"],
    );
}

#[test]
fn mcl_demo_logs_localization_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&["mcl-demo", "--track", "oval", "--laps", "1", "--out", out]);
    assert!(stdout.contains("localization error"), "{stdout}");
    non_empty(dir.path(), &["localization.csv", "localization_error.svg", "fixed_trace.csv"]);
}

#[test]
fn train_writes_policy_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(
        &config,
        "[env]\nmax_steps = 200\n[ppo]\nn_steps = 256\nbatch = 64\nepochs = 2\ntotal_steps = 512\neval_every = 256\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&["train", "--config", config.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()]);
    non_empty(&out, &["config.toml", "policy.json", "training_log.csv", "training_curve.svg"]);
    PolicyBundle::load(out.join("policy.json")).unwrap();
}
