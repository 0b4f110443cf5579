//! End-to-end checks of the command-line harness.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bilevel-dfo"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn gen_is_byte_deterministic() {
    let dir = tempfile::TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let status = bin()
            .args([
                "gen",
                "--kind",
                "denoise",
                "--n",
                "4",
                "--N",
                "32",
                "--sigma",
                "0.1",
                "--seed",
                "7",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&a.join("dataset.csv")), read(&b.join("dataset.csv")));
}

#[test]
fn gen_zero_noise_measurement_equals_truth() {
    let dir = tempfile::TempDir::new().unwrap();
    let out = dir.path().join("ds");
    let status = bin()
        .args([
            "gen", "--kind", "denoise", "--n", "2", "--N", "16", "--sigma", "0", "--seed", "3",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = String::from_utf8(read(&out.join("dataset.csv"))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // rows alternate truth/meas per image; values must match exactly
    let truth: Vec<&str> = lines[1].splitn(3, ',').collect();
    let meas: Vec<&str> = lines[2].splitn(3, ',').collect();
    assert_eq!(truth[2], meas[2]);
}

fn run_quick(out: &Path, extra: &[&str]) {
    let mut cmd = bin();
    cmd.args([
        "run",
        "--experiment",
        "denoise1",
        "--desk",
        "--solver",
        "fista",
        "--accuracy",
        "low",
        "--budget",
        "10",
        "--out",
    ])
    .arg(out)
    .args(extra);
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::TempDir::new().unwrap();
    let a = dir.path().join("run-a");
    let b = dir.path().join("run-b");
    run_quick(&a, &[]);
    run_quick(&b, &[]);
    for name in [
        "history.csv",
        "evals.csv",
        "meta.json",
        "final_params.csv",
        "reconstructions.csv",
        "dataset.csv",
    ] {
        assert!(a.join(name).exists(), "{name} missing");
    }
    assert_eq!(read(&a.join("history.csv")), read(&b.join("history.csv")));
    assert_eq!(read(&a.join("evals.csv")), read(&b.join("evals.csv")));
}

#[test]
fn report_joins_runs_and_rejects_empty_directories() {
    let dir = tempfile::TempDir::new().unwrap();
    let a = dir.path().join("run-a");
    run_quick(&a, &[]);
    let out = dir.path().join("report");
    let status = bin()
        .args(["report", "--runs"])
        .arg(&a)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("best_f_vs_work.csv").exists());
    assert!(out.join("final_params.csv").exists());

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let output = bin()
        .args(["report", "--runs"])
        .arg(&empty)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no runs found"));
}

#[test]
fn invalid_configuration_exits_with_code_2() {
    let output = bin()
        .args(["run", "--experiment", "denoise1", "--desk", "--accuracy", "bogus"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // config file with unknown fields is rejected by schema validation
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"kind":"denoise-1","not_a_field":1}"#).unwrap();
    let output = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn config_file_round_trips_through_run() {
    let dir = tempfile::TempDir::new().unwrap();
    let config = serde_json::json!({
        "kind": "denoise-1",
        "n_pixels": 32,
        "n_images": 2,
        "sigma": 0.1,
        "seed": 5,
        "solver": {"gd": {"step": "InverseLipschitz"}},
        "accuracy": "low",
        "trust_region": {"eval_budget": 6}
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out = dir.path().join("run");
    let output = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let meta: serde_json::Value =
        serde_json::from_str(&String::from_utf8(read(&out.join("meta.json"))).unwrap()).unwrap();
    assert_eq!(meta["config"]["n_pixels"], 32);
    assert_eq!(meta["config"]["seed"], 5);
}

#[test]
fn sweep_single_sigma_matches_run() {
    let dir = tempfile::TempDir::new().unwrap();
    let sweep_out = dir.path().join("sweep");
    let status = bin()
        .args([
            "sweep-sigma",
            "--experiment",
            "denoise1",
            "--desk",
            "--solver",
            "fista",
            "--accuracy",
            "low",
            "--budget",
            "10",
            "--sigmas",
            "0.1",
            "--out",
        ])
        .arg(&sweep_out)
        .status()
        .unwrap();
    assert!(status.success());
    let table = String::from_utf8(read(&sweep_out.join("sigma_alpha.csv"))).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2, "single sigma gives a single data row");
    let sweep_alpha: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();

    let run_out = dir.path().join("run");
    run_quick(&run_out, &[]);
    let params = String::from_utf8(read(&run_out.join("final_params.csv"))).unwrap();
    let run_alpha: f64 = params
        .lines()
        .find(|l| l.starts_with("alpha,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(sweep_alpha, run_alpha);
}
