use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgf-bench"))
        .args(args)
        .env_remove("RGF_THREADS")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn linear_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let summary = dir.path().join("summary.json");
    let o = bench(&["linear", "--seeds", "3", "--steps", "20", "--out", path(&csv), "--summary", path(&summary)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty(), "summary went to a file");

    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,t,x_true_0,y_0,gf-thin_mean_0,gf-thin_sd_0,gf-fat_mean_0,gf-fat_sd_0,rgf_mean_0,rgf_sd_0"
    );
    assert_eq!(lines.count(), 60);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 3);
    assert_eq!(json["summary"].as_array().unwrap().len(), 3);
    assert!(stderr(&o).contains("median rmse"));
}

#[test]
fn summary_defaults_to_stdout() {
    let o = bench(&["linear", "--seeds", "1", "--steps", "5", "--filters", "rgf"]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["summary"][0]["filter"], "rgf");
}

#[test]
fn radar_summary_reports_every_filter() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.json");
    std::fs::write(&config, r#"{"duration_s": 5.0}"#).unwrap();
    let o = bench(&["radar", "--seeds", "2", "--config", path(&config)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<&str> = json["summary"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["filter"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["gf-thin", "gf-fat", "rgf"]);
    for s in json["summary"].as_array().unwrap() {
        assert!(s.get("median_position_error").is_some());
    }
}

#[test]
fn sweep_reports_ratios() {
    let o = bench(&["sweep", "--seeds", "2", "--steps", "10", "--omega", "0.2", "--gamma", "5", "--pairs", "matched"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ratios: Vec<f64> = json["summary"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|s| s["rmse_ratio"].as_f64())
        .collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios.contains(&1.0), "matched pair is its own reference");
}

#[test]
fn seed_offset_selects_the_same_runs() {
    let dir = tempfile::tempdir().unwrap();
    let all = dir.path().join("all.csv");
    let tail = dir.path().join("tail.csv");
    assert!(bench(&["linear", "--seeds", "4", "--steps", "10", "--out", path(&all)]).status.success());
    assert!(bench(&["linear", "--seeds", "2", "--seed-offset", "2", "--steps", "10", "--out", path(&tail)]).status.success());
    let all = std::fs::read_to_string(all).unwrap();
    let tail = std::fs::read_to_string(tail).unwrap();
    let expected: Vec<&str> = all
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("2,") || l.starts_with("3,"))
        .collect();
    assert_eq!(tail.lines().skip(1).collect::<Vec<_>>(), expected);
}

#[test]
fn selftest_passes_and_detects_missing_jitter() {
    let o = bench(&["selftest"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);

    let o = bench(&["selftest", "--jitter", "none"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL omega-zero-reduction"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["linear", "--bogus"][..],
        &["linear", "--omega", "1.5"],
        &["linear", "--filters", "kalman"],
        &["sweep", "--omega", "0.1,0.2", "--gamma", "10"],
        &["sweep", "--pairs", "sideways"],
        &["radar", "--config", "/nonexistent/radar.json"],
    ] {
        let o = bench(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn invalid_thread_count_exits_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_rgf-bench"))
        .args(["linear", "--seeds", "1", "--steps", "2"])
        .env("RGF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("RGF_THREADS"));
}

#[test]
fn exact_linear_backend_rejects_nonlinear_feature() {
    let o = bench(&["linear", "--seeds", "1", "--seed-offset", "7", "--steps", "5", "--backend", "exact-linear"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("seed 7") && msg.contains("rgf"), "{msg}");
}

#[test]
fn exact_linear_backend_runs_gaussian_filters() {
    let o = bench(&["linear", "--seeds", "1", "--steps", "5", "--backend", "exact-linear", "--filters", "gf-thin,gf-fat"]);
    assert!(o.status.success(), "{}", stderr(&o));
}
