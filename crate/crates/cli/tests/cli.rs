use std::path::Path;
use std::process::{Command, Output};

fn metacomm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metacomm"))
        .args(args)
        .current_dir(dir)
        .env_remove("METACOMM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn tiny_chain_csv_has_two_time_units() {
    let dir = tempfile::tempdir().unwrap();
    let out = metacomm(dir.path(), &["exact-hitting", "--n1", "1", "--n2", "1", "--kappa", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/hitting_times.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("j1,j2,x1,x2,T"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let t: f64 = cols[4].parse().unwrap();
        let mixed = cols[0] != cols[1];
        assert!((t - if mixed { 2.0 } else { 0.0 }).abs() < 1e-12, "{line}");
    }
    assert_eq!(summary(&out)["status"], "ok");
}

#[test]
fn validate_passes_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = metacomm(dir.path(), &["validate", "--n1", "8", "--n2", "8", "--kappa", "1", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/validate.json")).unwrap()).unwrap();
    let checks = report["result"]["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["passed"] == true), "{checks:?}");
    assert_eq!(report["config"]["seed"], 7);
}

#[test]
fn missing_flag_is_usage_error_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = metacomm(dir.path(), &["exact-hitting", "--n1", "4", "--kappa", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n2"));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn invalid_values_and_unknown_flags_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["exact-hitting", "--n1", "2", "--n2", "4", "--kappa", "1"],
        vec!["exact-hitting", "--n1", "2", "--n2", "2", "--kappa", "0"],
        vec!["pde-elliptic", "--d", "0.5", "--kappa", "1", "--grid-n", "2"],
        vec!["simulate", "--bogus"],
        vec!["sweep", "--kappa", "1"],
    ] {
        let out = metacomm(dir.path(), &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
    assert_eq!(metacomm(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"n1": 6, "n2": 3, "kappa": 2.0, "replicates": 50, "seed": 4, "output_dir": "res"}"#)
        .unwrap();
    let out = metacomm(dir.path(), &["simulate", "--config", "run.json", "--kappa", "1.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("res/simulate.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["kappa"], 1.5);
    assert_eq!(report["config"]["n1"], 6);
    assert_eq!(report["config"]["replicates"], 50);
    assert_eq!(report["config"]["max_steps"], 1200);

    std::fs::write(&cfg, r#"{"n1": 6, "n2": 3, "kapa": 2.0}"#).unwrap();
    let out = metacomm(dir.path(), &["simulate", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kapa"));

    std::fs::write(&cfg, r#"{"command": "validate", "n1": 6, "n2": 3, "kappa": 1.0}"#).unwrap();
    assert_eq!(metacomm(dir.path(), &["simulate", "--config", "run.json"]).status.code(), Some(1));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_metacomm"))
        .args(["exact-hitting", "--n1", "2", "--n2", "1", "--kappa", "1"])
        .current_dir(dir.path())
        .env("METACOMM_OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from_env/hitting_times.csv").exists());
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args =
        ["simulate", "--n1", "8", "--n2", "4", "--kappa", "1", "--seed", "99", "--replicates", "300", "--keep-raw"];
    for dir in [&a, &b] {
        assert_eq!(metacomm(dir.path(), &args).status.code(), Some(0));
    }
    for name in ["simulate.json", "simulate_raw.csv"] {
        let x = std::fs::read(a.path().join("out").join(name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let pde = ["pde-elliptic", "--d", "0.5", "--kappa", "1", "--grid-n", "16"];
    for dir in [&a, &b] {
        assert_eq!(metacomm(dir.path(), &pde).status.code(), Some(0));
    }
    for name in ["pde_elliptic.json", "tau.csv"] {
        assert_eq!(
            std::fs::read(a.path().join("out").join(name)).unwrap(),
            std::fs::read(b.path().join("out").join(name)).unwrap()
        );
    }
}

#[test]
fn failed_theorem_check_exits_two_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // Coarser chains listed last: the error cannot decrease.
    let out = metacomm(
        dir.path(),
        &["sweep", "--study", "convergence", "--d", "1", "--kappa", "1", "--n1-list", "8,4", "--grid-n", "16"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(&out)["status"], "check_failed");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/sweep.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn d_limit_sweep_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = metacomm(
        dir.path(),
        &["sweep", "--study", "d-limit", "--kappa", "1", "--d-list", "0.1,0.05", "--grid-n", "32"],
    );
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert!(s["summary"].get("d_star").is_some());
    let csv = std::fs::read_to_string(dir.path().join("out/sweep_d_limit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn parabolic_and_convergence_sweeps_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = metacomm(dir.path(), &["pde-parabolic", "--d", "1", "--kappa", "1", "--grid-n", "16", "--nt", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let out = metacomm(
        dir.path(),
        &[
            "sweep",
            "--study",
            "convergence",
            "--n1",
            "8",
            "--n2",
            "8",
            "--kappa",
            "1",
            "--n1-list",
            "4,8",
            "--grid-n",
            "32",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep_convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let bad =
        metacomm(dir.path(), &["sweep", "--study", "convergence", "--d", "0.3", "--kappa", "1", "--n1-list", "8"]);
    assert_eq!(bad.status.code(), Some(1));
}
