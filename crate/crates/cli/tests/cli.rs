//! End-to-end runs of the `autopilot` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autopilot"))
        .args(args)
        .env_remove("AUTOPILOT_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn autopilot(args: &[&str], out: &Path) -> Output {
    let mut all = args.to_vec();
    all.extend(["--output-dir", out.to_str().unwrap()]);
    bare(&all)
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = autopilot(&["train", "--config", "/nonexistent/autopilot.toml"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: loading config"), "{err}");
}

#[test]
fn zero_episode_run_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    ok(&autopilot(&["train", "--episodes", "0"], dir.path()));
    for f in ["config.toml", "diagnostics.csv", "test_report.csv", "final.ckpt", "best.ckpt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let inspect = ok(&bare(&["inspect-checkpoint", dir.path().join("final.ckpt").to_str().unwrap()]));
    assert!(inspect.contains("episode           0"), "{inspect}");
}

#[test]
fn written_config_reloads_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&autopilot(&["train", "--episodes", "0", "--seed", "42"], dir.path()));
    let cfg = dir.path().join("config.toml");
    let again = dir.path().join("again");
    ok(&autopilot(&["train", "--config", cfg.to_str().unwrap()], &again));
    // Identical apart from where the artifacts went.
    let body = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("output_dir"))
            .map(String::from)
            .collect()
    };
    assert_eq!(body(&cfg), body(&again.join("config.toml")));
    let digest = |p: &Path| {
        let out = ok(&bare(&["inspect-checkpoint", p.to_str().unwrap()]));
        out.lines().next().unwrap().to_string()
    };
    assert_eq!(digest(&dir.path().join("final.ckpt")), digest(&again.join("final.ckpt")));
}

#[test]
fn same_seed_gives_identical_diagnostics() {
    let root = tempfile::tempdir().unwrap();
    let logs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let dir = root.path().join(name);
            ok(&autopilot(&["train", "--episodes", "2", "--seed", "3"], &dir));
            fs::read(dir.join("diagnostics.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[0].iter().filter(|&&b| b == b'\n').count(), 3);
}

#[test]
fn agent_swept_against_itself_never_wins() {
    let dir = tempfile::tempdir().unwrap();
    ok(&autopilot(&["train", "--episodes", "0"], dir.path()));
    let ckpt = dir.path().join("final.ckpt");
    let c = ckpt.to_str().unwrap();
    let out = ok(&autopilot(&["sweep", c, c, "--kind", "latency"], dir.path()));
    assert!(out.contains("latency sweep over 41 points"), "{out}");
    let summary = fs::read_to_string(dir.path().join("sweep_latency_summary.csv")).unwrap();
    let rates: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rates, vec![0.0; 5]);
}

#[test]
fn conflicting_perturbation_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(&autopilot(&["train", "--episodes", "0"], dir.path()));
    let c = dir.path().join("final.ckpt");
    let o = autopilot(
        &["test", c.to_str().unwrap(), "--latency-ms", "3", "--delta-cz", "0.1"],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mutually exclusive"));
}
