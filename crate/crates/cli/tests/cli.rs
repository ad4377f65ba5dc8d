use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diamond-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "days = 10\nn_paths = 6\n";

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("paths.csv");
    let o = sim(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("paths 6"));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "path_id,final_eps,v_cfmm,v_diamond,v_hodl,ratio_diamond_cfmm,ratio_hodl_cfmm,cumulative_cfmm_lvr,cumulative_rebate"
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn run_is_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let o = sim(&[
            "run",
            "--config",
            &cfg,
            "--out",
            path.to_str().unwrap(),
            "--mode",
            "cvf",
            "--workers",
            workers,
        ]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    sim(&[
        "run",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    sim(&[
        "run",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--seed",
        "2",
    ]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn oracle_settlement_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "days = 5\nn_paths = 2\noracle_noise = 0.01\n");
    let o = sim(&[
        "run",
        "--config",
        &cfg,
        "--mode",
        "cvf",
        "--settlement",
        "oracle",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_paths = 2\nvolatility = 0.3\n");
    let o = sim(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("volatility"));
}

#[test]
fn missing_config_reports_path() {
    let o = sim(&["run", "--config", "/no/such/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/scenario.toml"));
}

#[test]
fn bad_flag_values_rejected() {
    assert!(!sim(&["run", "--mode", "swap"]).status.success());
    assert!(!sim(&["run", "--settlement", "vote"]).status.success());
    assert!(!sim(&["verify", "--criterion", "9"]).status.success());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep.csv");
    let o = sim(&[
        "sweep",
        "--config",
        &cfg,
        "--variable",
        "beta",
        "--values",
        "0.5,0.95",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("beta,0.5,"));
}

#[test]
fn sweep_rejects_unknown_variable() {
    assert!(!sim(&["sweep", "--variable", "gamma", "--values", "1"])
        .status
        .success());
}

#[test]
fn verify_selected_criteria() {
    let o = sim(&["verify", "--criterion", "1", "--criterion", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
}

#[test]
fn liquidation_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "days = 100\nn_paths = 4\ndaily_move = 3.0\ntau_blocks = 500\nconversion_mode = \"cvf\"\n",
    );
    let o = sim(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("liquidations 1"));
}
