use std::fs;
use std::path::{Path, PathBuf};

use stochapprox::cli::{run, EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use stochapprox::experiment::{read_rows, summarize, GsllnDataRow, SaRow, SgdRow, SummaryRecord, SweepIndex};

const SA: &str = r#"{
    "mode": "sa", "id": "small-sa", "trials": 12, "base_seed": 9, "horizon": 3000,
    "checkpoints": [10, 100, 1000],
    "problem": {"kind": "contraction", "dim": 3, "rho0": 0.5, "mixing": {"kind": "random_rotation", "seed": 4}},
    "noise": {"family": "student_t_iid", "nu": 2.5, "scale": 1.0},
    "schedule": {"kind": "harmonic", "D": 1.0},
    "assert": {"max_diverged": 0, "median_decreases": {"from": 10, "to": 3000}}
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn cli(args: &[&str]) -> i32 {
    let mut all = vec!["stochapprox"];
    all.extend_from_slice(args);
    run(all)
}

fn summary_of(path: &Path) -> (SummaryRecord, serde_json::Value) {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    (serde_json::from_value(v["summary"].clone()).unwrap(), v["config"].clone())
}

#[test]
fn sa_run_round_trip_and_rederivable_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sa.json", SA);
    let out = tmp.path().join("out");
    assert_eq!(cli(&["sa-run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--assert"]), EXIT_OK);

    let rows: Vec<SaRow> = read_rows(&out.join("small-sa.rows.csv")).unwrap();
    assert_eq!(rows.len(), 12 * 4);
    assert!(rows.iter().all(|r| r.seed == 9 ^ r.trial as u64));
    let (summary, config) = summary_of(&out.join("small-sa.summary.json"));
    assert_eq!(summarize("small-sa", &rows).unwrap().checkpoints, summary.checkpoints);
    assert!(summarize("small-sa", &rows).unwrap().same_statistics(&summary));
    for c in &summary.checkpoints {
        assert!(c.q10 <= c.q50 && c.q50 <= c.q90);
    }
    // Defaults are recorded in the persisted config.
    assert_eq!(config["multiplier"]["kind"], "constant");
    assert_eq!(config["x0"].as_array().unwrap().len(), 3);

    let header = fs::read_to_string(out.join("small-sa.rows.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "experiment_id,trial,seed,checkpoint_n,err,phi_n,diverged,beta_n");
}

#[test]
fn rerun_is_byte_identical_and_hash_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sa.json", SA);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cli(&["sa-run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--workers", "1"]), EXIT_OK);
    assert_eq!(cli(&["sa-run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--workers", "4"]), EXIT_OK);
    let rows = |d: &Path| fs::read(d.join("small-sa.rows.csv")).unwrap();
    assert_eq!(rows(&a), rows(&b));
    let (sa, _) = summary_of(&a.join("small-sa.summary.json"));
    let (sb, _) = summary_of(&b.join("small-sa.summary.json"));
    assert_eq!(sa.config_hash, sb.config_hash);

    let c = tmp.path().join("c");
    assert_eq!(cli(&["sa-run", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "10"]), EXIT_OK);
    assert_ne!(rows(&a), rows(&c));
    let (sc, _) = summary_of(&c.join("small-sa.summary.json"));
    assert_ne!(sa.config_hash, sc.config_hash);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();

    let bad = write_config(tmp.path(), "bad.json", &SA.replace("\"trials\": 12", "\"trials\": 0"));
    assert_eq!(cli(&["sa-run", "--config", bad.to_str().unwrap(), "--out", o]), EXIT_CONFIG);
    let missing = tmp.path().join("nope.json");
    assert_eq!(cli(&["sa-run", "--config", missing.to_str().unwrap(), "--out", o]), EXIT_CONFIG);
    let good = write_config(tmp.path(), "sa.json", SA);
    assert_eq!(cli(&["sgd-run", "--config", good.to_str().unwrap(), "--out", o]), EXIT_CONFIG);
    assert_eq!(cli(&["sa-run", "--config", good.to_str().unwrap(), "--out", o, "--workers", "0"]), EXIT_CONFIG);
    assert_eq!(cli(&["sa-run", "--bogus"]), EXIT_CONFIG);

    let strict = SA.replace("\"median_decreases\": {\"from\": 10, \"to\": 3000}", "\"final_median_at_most\": 1e-12");
    let strict = write_config(tmp.path(), "strict.json", &strict);
    assert_eq!(cli(&["sa-run", "--config", strict.to_str().unwrap(), "--out", o]), EXIT_OK);
    assert_eq!(cli(&["sa-run", "--config", strict.to_str().unwrap(), "--out", o, "--assert"]), EXIT_ASSERT);

    let no_assert = write_config(tmp.path(), "plain.json", &SA.replace(
        ",\n    \"assert\": {\"max_diverged\": 0, \"median_decreases\": {\"from\": 10, \"to\": 3000}}",
        "",
    ));
    assert_eq!(cli(&["sa-run", "--config", no_assert.to_str().unwrap(), "--out", o, "--assert"]), EXIT_CONFIG);
}

#[test]
fn io_failure_leaves_partial_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sa.json", SA);
    let out = tmp.path().join("out");
    // A directory where the rows file should go makes the final rename fail.
    fs::create_dir_all(out.join("small-sa.rows.csv").join("blocker")).unwrap();
    assert_eq!(cli(&["sa-run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_RUNTIME);
    assert!(out.join("small-sa.PARTIAL").exists());
    assert!(!out.join("small-sa.summary.json").exists());

    fs::remove_dir_all(out.join("small-sa.rows.csv")).unwrap();
    assert_eq!(cli(&["sa-run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_OK);
    assert!(!out.join("small-sa.PARTIAL").exists());
}

#[test]
fn sgd_run_jsonl_rows() {
    let text = r#"{
        "id": "small-sgd", "trials": 4, "horizon": 2000, "checkpoints": [100],
        "problem": {"kind": "diagonal_quadratic", "q": [1.0, 3.0], "p": [1.0, -1.0]},
        "noise": {"family": "gaussian_iid", "sigma": 0.5},
        "eta": {"kind": "harmonic"},
        "c": {"kind": "power_law", "gamma": 0.25},
        "mask": {"kind": "round_robin_blocks", "bsz": 1}
    }"#;
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sgd.json", text);
    let out = tmp.path().join("out");
    let code = cli(&["sgd-run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "jsonl"]);
    assert_eq!(code, EXIT_OK);
    let rows: Vec<SgdRow> = read_rows(&out.join("small-sgd.rows.jsonl")).unwrap();
    assert_eq!(rows.len(), 4 * 2);
    assert!(rows.iter().all(|r| r.active_count == Some(1) || r.checkpoint_n == 2000));
    assert!(rows.iter().any(|r| r.active_count.is_none()));
    let (summary, _) = summary_of(&out.join("small-sgd.summary.json"));
    assert!(summarize("small-sgd", &rows).unwrap().same_statistics(&summary));
    // Round-robin with one coordinate per block: one pair of evaluations per step.
    let evals: Vec<u64> = serde_json::from_value(summary.extra["evaluations_per_trial"].clone()).unwrap();
    assert_eq!(evals, vec![4000; 4]);
}

#[test]
fn gslln_test_rows_have_mode_columns() {
    let text = r#"{
        "mode": "gslln", "id": "g", "trials": 10, "horizon": 5000, "checkpoints": [50],
        "noise": {"family": "gaussian_iid", "sigma": 1.0},
        "schedule": {"kind": "harmonic"},
        "t_grid": [0.5, 2.0],
        "zeta_policies": [{"kind": "constant", "value": 1.0}, {"kind": "noise_sign"}]
    }"#;
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "g.json", text);
    let out = tmp.path().join("out");
    assert_eq!(cli(&["gslln-test", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_OK);
    let path = out.join("g.rows.csv");
    let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "experiment_id,trial,seed,checkpoint_n,err,phi_n,diverged,cell,t,zeta_policy,abs_S");
    let rows: Vec<GsllnDataRow> = read_rows(&path).unwrap();
    assert_eq!(rows.len(), 4 * 10 * 2);
    let (summary, _) = summary_of(&out.join("g.summary.json"));
    assert_eq!(summary.cells().len(), 4);
    assert!(summarize("g", &rows).unwrap().same_statistics(&summary));
    assert_eq!(summary.extra["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn check_conditions_rows_and_assertions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/conditions_log_tempered_cauchy.json");
    let code = cli(&["check-conditions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--assert"]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(out.join("conditions-log-tempered-cauchy.rows.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("experiment_id,family,verdict,clause,value"));
    assert!(text.contains(",H3,holds,"));
    assert!(text.contains(",H1,fails,E|W|^2,inf"));
}

#[test]
fn sweep_writes_children_and_index() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/sweep_delta.json");
    assert_eq!(cli(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_OK);
    let index: SweepIndex = serde_json::from_slice(&fs::read(out.join("ltc-delta.index.json")).unwrap()).unwrap();
    assert_eq!(index.children.len(), 3);
    let ids: std::collections::BTreeSet<&str> = index.children.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids.len(), 3);
    for c in &index.children {
        assert!(c.rows.exists() && c.summary.exists());
    }
    let hashes: std::collections::BTreeSet<&str> = index.children.iter().map(|c| c.config_hash.as_str()).collect();
    assert_eq!(hashes.len(), 3);
}
