use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ppanel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppanel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// Simulate the replication panel once into `dir/sim`.
fn simulated(dir: &Path) -> PathBuf {
    let out = ppanel(dir, &["simulate", "--preset", "replication", "--out", "sim"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("sim/panel.csv")
}

#[test]
fn simulate_writes_panel_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let panel = simulated(dir.path());
    assert!(panel.exists());
    let manifest = json(dir.path().join("sim/manifest.json"));
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["dgp.json", "panel.csv", "truth.json"]);
    assert_eq!(manifest["command"], "simulate");
}

#[test]
fn did_writes_csv_and_json_reports() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let out = ppanel(
        dir.path(),
        &["did", "--data", "sim/panel.csv", "--panel", "2", "--out", "d"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("d/did.csv")).unwrap();
    assert!(csv
        .starts_with("panel,estimator,term,estimate,se,t_stat,p_value,ci_lower,ci_upper,n_obs,n_clusters,r_squared\n"));
    let report = json(dir.path().join("d/did.json"));
    assert_eq!(report["confidence"], 0.95);
    assert!(dir.path().join("d/manifest.json").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        "data = \"sim/panel.csv\"\npanel = \"2\"\nconfidence = 0.9\nout = \"from-file\"\nformat = \"json\"\n",
    )
    .unwrap();
    let out = ppanel(dir.path(), &["did", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(dir.path().join("from-file/did.json"))["confidence"], 0.9);
    assert!(!dir.path().join("from-file/did.csv").exists());

    let out = ppanel(
        dir.path(),
        &[
            "did",
            "--config",
            "run.toml",
            "--confidence",
            "0.99",
            "--out",
            "from-flag",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(dir.path().join("from-flag/did.json"))["confidence"], 0.99);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = ppanel(dir.path(), &["did", "--data", "nope.csv", "--panel", "1"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    simulated(dir.path());
    let design = ppanel(
        dir.path(),
        &["csdid", "--data", "sim/panel.csv", "--panel", "2", "--out", "c"],
    );
    assert_eq!(code(&design), 3);
    let numerical = ppanel(
        dir.path(),
        &["arco", "--data", "sim/panel.csv", "--panel", "3", "--out", "a"],
    );
    assert_eq!(code(&numerical), 4);

    std::fs::write(dir.path().join("bad.csv"), "unit_id,region,year\nf,Beijing,2010\n").unwrap();
    assert_eq!(code(&ppanel(dir.path(), &["describe", "--data", "bad.csv"])), 2);
    assert_eq!(
        code(&ppanel(
            dir.path(),
            &["did", "--data", "sim/panel.csv", "--panel", "12"]
        )),
        2
    );
}

#[test]
fn partition_lists_groups_and_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppanel(dir.path(), &["partition", "--period", "5", "--out", "p"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("A5: 14"), "{stdout}");
    assert!(dir.path().join("p/designs.csv").exists());
}

#[test]
fn replicate_all_is_reproducible() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let out = ppanel(dir.path(), &["replicate-all", "--out", "r"]);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
            dir
        })
        .collect();
    let read = |i: usize, f: &str| std::fs::read(runs[i].path().join("r").join(f)).unwrap();
    assert_eq!(read(0, "manifest.json"), read(1, "manifest.json"));
    assert_eq!(read(0, "grid.json"), read(1, "grid.json"));
    let grid = String::from_utf8(read(0, "grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 8 * 2 + 1 + 3 + 2 + 2);
}

#[test]
fn demo_bias_reports_both_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppanel(dir.path(), &["demo-bias", "--reps", "10", "--out", "s"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("csdid closer to truth"));
    let out = ppanel(
        dir.path(),
        &["demo-bias", "--scenario", "contamination", "--reps", "10", "--out", "c"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("c/manifest.json").exists());
}
