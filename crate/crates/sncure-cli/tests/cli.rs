//! End-to-end checks of the command-line interface: output schemas, exit
//! codes, determinism, and config precedence.

use std::path::Path;
use std::process::{Command, Output};

fn sncure(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sncure"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_small(dir: &Path, seed: &str) {
    let out = sncure(
        dir,
        &[
            "simulate", "--n", "120", "--scenario", "simple", "--seed", seed,
        ],
    );
    assert_success(&out);
}

#[test]
fn simulate_metadata_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "5");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
            .unwrap();
    assert_eq!(
        meta["config"]["beta_true"],
        serde_json::json!([0.1, 0.05, 0.025, 0.0, 0.0])
    );
    assert_eq!(meta["config"]["seed"], 5);
    assert!(meta["realized_c"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_rejects_zero_n_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sncure(dir.path(), &["simulate", "--n", "0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = sncure(dir.path(), &["simulate", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn simulate_same_seed_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    simulate_small(d1.path(), "9");
    simulate_small(d2.path(), "9");
    for f in ["panel.csv", "events.csv"] {
        assert_eq!(
            std::fs::read(d1.path().join(f)).unwrap(),
            std::fs::read(d2.path().join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
}

#[test]
fn fit_shapes_and_point_only_mode() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "11");
    let out = sncure(
        dir.path(),
        &[
            "fit", "--panel", "panel.csv", "--events", "events.csv", "--estimator",
            "parametric", "--m-lags", "3", "--seed", "1",
        ],
    );
    assert_success(&out);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("estimates.json")).unwrap())
            .unwrap();
    assert_eq!(fit["estimates"]["beta"].as_array().unwrap().len(), 4);
    assert!(fit["estimates"].get("se").is_none());
    assert!(fit.get("bootstrap").is_none());
    assert_eq!(fit["config"]["estimator"], "parametric");
}

#[test]
fn fit_with_bootstrap_attaches_se_and_ci() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "12");
    let out = sncure(
        dir.path(),
        &[
            "fit", "--panel", "panel.csv", "--events", "events.csv", "--estimator",
            "parametric", "--m-lags", "1", "--bootstrap", "8", "--seed", "2",
        ],
    );
    assert_success(&out);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("estimates.json")).unwrap())
            .unwrap();
    assert_eq!(fit["estimates"]["se"].as_array().unwrap().len(), 2);
    let ci = fit["estimates"]["ci"].as_array().unwrap();
    let beta = fit["estimates"]["beta"].as_array().unwrap();
    for (c, b) in ci.iter().zip(beta) {
        let (lo, hi) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
        let b = b.as_f64().unwrap();
        assert!(lo <= b && b <= hi);
    }
    assert_eq!(fit["bootstrap"]["replicates"].as_array().unwrap().len(), 8);
}

#[test]
fn fit_corrupt_row_names_line_and_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("panel.csv"),
        "id,k,A,L1,x_time,death_observed\n0,0,0.5,0.1,2.0,0\n0,1,bogus,0.2,2.0,0\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("events.csv"), "id,t\n").unwrap();
    let out = sncure(
        dir.path(),
        &[
            "fit", "--panel", "panel.csv", "--events", "events.csv", "--seed", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:"), "row number missing from: {err}");
}

#[test]
fn fit_missing_file_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = sncure(
        dir.path(),
        &[
            "fit", "--panel", "nope.csv", "--events", "nope2.csv", "--seed", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn counterfactual_zero_above_max_and_two_cap_blocks() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "13");
    assert_success(&sncure(
        dir.path(),
        &[
            "fit", "--panel", "panel.csv", "--events", "events.csv", "--estimator",
            "parametric", "--m-lags", "1", "--seed", "1",
        ],
    ));
    // normalized exposures live in [0,1], so a cap of 2 averts nothing
    let out = sncure(
        dir.path(),
        &[
            "counterfactual", "--panel", "panel.csv", "--events", "events.csv",
            "--estimates", "estimates.json", "--cap", "2.0", "--cap", "0.5",
        ],
    );
    assert_success(&out);
    let text = std::fs::read_to_string(dir.path().join("averted.csv")).unwrap();
    let mut above_max_rows = 0;
    let mut labels = std::collections::HashSet::new();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        labels.insert(cells[0].to_string());
        if cells[0] == "cap_2" {
            above_max_rows += 1;
            assert_eq!(cells[3].parse::<f64>().unwrap(), 0.0);
        }
    }
    assert!(above_max_rows > 0);
    assert_eq!(labels.len(), 2);
}

#[test]
fn counterfactual_toy_total_matches_hand_value() {
    let dir = tempfile::tempdir().unwrap();
    // one individual, one fully at-risk period, A=2 (baseline_len 0)
    std::fs::write(
        dir.path().join("panel.csv"),
        "id,k,A,L1,x_time,death_observed\n0,0,2.0,0.0,1.0,0\n0,1,2.0,0.0,1.0,0\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("events.csv"), "id,t\n").unwrap();
    // hand-written estimates file with beta_0 = 0.1
    std::fs::write(
        dir.path().join("est.json"),
        r#"{
  "config": {},
  "estimates": {
    "beta": [0.1],
    "method": "parametric",
    "alpha": [],
    "diagnostics": []
  },
  "timings": { "fit_seconds": 0.0, "bootstrap_seconds": 0.0 }
}"#,
    )
    .unwrap();
    let out = sncure(
        dir.path(),
        &[
            "counterfactual", "--panel", "panel.csv", "--events", "events.csv",
            "--estimates", "est.json", "--cap", "1.0", "--t-end", "1.0",
        ],
    );
    assert_success(&out);
    let text = std::fs::read_to_string(dir.path().join("averted.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let total: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!((total - 0.1).abs() < 1e-12, "{last}");
}

#[test]
fn replicate_columns_and_single_rep_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let out = sncure(
        dir.path(),
        &[
            "replicate", "--scenario", "simple", "--n", "100", "--replicates", "1",
            "--bootstrap", "4", "--estimators", "parametric", "--m-lags", "1",
            "--seed", "6", "--out", "rep.csv",
        ],
    );
    assert_success(&out);
    let text = std::fs::read_to_string(dir.path().join("rep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "estimator,lag,sqrtn_bias,se_x100,coverage"
    );
    for line in lines {
        let cov: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(cov == 0.0 || cov == 1.0);
    }
    assert!(dir.path().join("rep.config.json").exists());
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{ "simulate": { "n": 50, "seed": 40, "scenario": "complex" } }"#,
    )
    .unwrap();
    // flag --n overrides the file; seed and scenario come from the file
    let out = sncure(
        dir.path(),
        &["simulate", "--config", "cfg.json", "--n", "60"],
    );
    assert_success(&out);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["n"], 60);
    assert_eq!(meta["config"]["seed"], 40);
    assert_eq!(meta["config"]["scenario"], "complex");
}
