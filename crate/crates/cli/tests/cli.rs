use std::path::Path;
use std::process::{Command, Output};

fn nullfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nullfit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn manifest_paths(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest written");
    text.lines()
        .filter_map(|l| l.trim().strip_prefix("\"path\": \""))
        .map(|rest| rest.trim_end_matches(['"', ',']).to_string())
        .collect()
}

#[test]
fn simulate_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = nullfit(&["simulate", "--model", "fhn", "--out", out]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(stdout(&res).contains("oscillating"));
    for f in ["trajectory.csv", "trajectory.json", "oscillation.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,"));
    let listed = manifest_paths(dir.path());
    assert!(listed.iter().any(|p| p == "trajectory.csv"), "{listed:?}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&nullfit(&["simulate", "--model", "lorenz", "--out", out])), 1);
    assert_eq!(code(&nullfit(&["simulate", "--model", "fhn", "--set", "nope=1", "--out", out])), 1);
    assert_eq!(code(&nullfit(&["train-extract", "--model", "fhn", "--combination", "h_w", "--out", out])), 1);
    assert_eq!(code(&nullfit(&["simulate", "--bogus-flag"])), 1);
    assert_eq!(code(&nullfit(&["symbolic", "--curve", "/nonexistent/curve.json", "--out", out])), 1);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // No oscillation at this parameter value, so no period can be found.
    let res = nullfit(&["diagnose", "--model", "gene_expr", "--set", "S=1", "--out", out]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn help_exits_with_zero() {
    assert_eq!(code(&nullfit(&["--help"])), 0);
}

#[test]
fn train_extract_checkpoints_and_symbolic_fit() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let res = nullfit(&[
        "train-extract",
        "--model",
        "fhn",
        "--epochs",
        "250",
        "--set",
        "max_pairs=500",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let checkpoints: Vec<_> = std::fs::read_dir(run.join("checkpoints")).unwrap().collect();
    assert_eq!(checkpoints.len(), 2);
    assert!(run.join("checkpoints/nullcline_epoch_0100.csv").is_file());
    assert!(run.join("checkpoints/nullcline_epoch_0200.csv").is_file());
    for f in ["network.json", "pairs.csv", "train_log.csv", "nullcline.csv", "nullcline.json", "eval.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }

    let fit_dir = dir.path().join("fit");
    let curve = run.join("nullcline.json");
    let res = nullfit(&["symbolic", "--curve", curve.to_str().unwrap(), "--lambda", "1e9", "--out", fit_dir.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(stdout(&res).lines().next(), Some("v = 0"));
    assert!(fit_dir.join("fit.json").is_file());
}
