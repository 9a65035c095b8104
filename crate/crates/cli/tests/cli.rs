//! End-to-end subprocess tests: every pipeline here shells out to the
//! built binary exactly as a user would.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proprec"))
}

fn fixture() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ratings_50x80.tsv")
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn run_fail(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        !out.status.success(),
        "command {args:?} unexpectedly succeeded"
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// Data rows of a report CSV, split into cells.
fn csv_rows(path: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "param,predictor,estimator,metric,true_value,rmse,mean,std,trials"
    );
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

// ── Error contract ────────────────────────────────────────────────────

#[test]
fn domain_errors_print_one_error_line_and_exit_nonzero() {
    let stderr = run_fail(&["estimate"]);
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1);

    let stderr = run_fail(&[
        "estimate",
        "--obs",
        "/nonexistent/file.txt",
        "--pred",
        "/also/missing",
    ]);
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");
}

#[test]
fn unknown_flags_are_rejected() {
    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
}

// ── Ingest ────────────────────────────────────────────────────────────

#[test]
fn ingest_reports_dims_and_writes_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let obs = path_str(dir.path(), "obs.txt");
    let mapping = path_str(dir.path(), "ids.tsv");
    let stdout = run_ok(&[
        "ingest",
        "--input",
        fixture(),
        "--out",
        &obs,
        "--mapping",
        &mapping,
    ]);
    assert_eq!(stdout.trim(), "users=50 items=80 observations=1018");
    let map_text = std::fs::read_to_string(&mapping).unwrap();
    assert!(map_text.lines().any(|l| l == "user\t101\t0"));
    assert_eq!(map_text.lines().count(), 130);
}

// ── Synthetic pipeline ────────────────────────────────────────────────

#[test]
fn complete_propensities_sample_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let obs = path_str(dir.path(), "obs.txt");
    let truth = path_str(dir.path(), "truth.txt");
    let props = path_str(dir.path(), "props.txt");
    let sampled = path_str(dir.path(), "sampled.txt");

    run_ok(&["ingest", "--input", fixture(), "--out", &obs]);
    let stdout = run_ok(&[
        "complete",
        "--input",
        &obs,
        "--out",
        &truth,
        "--rank",
        "5",
        "--lambdas",
        "0.01,0.1",
        "--iters",
        "100",
        "--seed",
        "3",
    ]);
    assert_eq!(stdout.trim(), "users=50 items=80");

    let stdout = run_ok(&[
        "propensities",
        "--truth",
        &truth,
        "--alpha",
        "0.5",
        "--target",
        "0.1",
        "--out",
        &props,
    ]);
    assert_eq!(stdout.trim(), "alpha=0.5 target=0.1");

    run_ok(&[
        "sample", "--truth", &truth, "--props", &props, "--seed", "7", "--out", &sampled,
    ]);

    // scoring the ground truth against its own observations: every loss
    // is zero, so all three estimators are exactly zero
    let stdout = run_ok(&[
        "estimate",
        "--obs",
        &sampled,
        "--pred",
        &truth,
        "--metrics",
        "MAE,MSE",
    ]);
    let lines: Vec<&str> = stdout.trim_end().lines().collect();
    assert_eq!(lines.len(), 6);
    for line in &lines {
        assert!(line.ends_with("value=0.0000000000000000e0"), "line: {line}");
    }
}

// ── Training pipeline ─────────────────────────────────────────────────

#[test]
fn cv_train_predict_chain_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let obs = path_str(dir.path(), "obs.txt");
    run_ok(&["ingest", "--input", fixture(), "--out", &obs]);

    let cv_args = |model: &str| {
        vec![
            "cv".to_string(),
            "--obs".into(),
            obs.clone(),
            "--lambdas".into(),
            "0.01,0.1".into(),
            "--ranks".into(),
            "5".into(),
            "--folds".into(),
            "4".into(),
            "--iters".into(),
            "100".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            model.to_string(),
        ]
    };
    let model_a = path_str(dir.path(), "a.model");
    let model_b = path_str(dir.path(), "b.model");
    let owned_a = cv_args(&model_a);
    let stdout_a = run_ok(&owned_a.iter().map(String::as_str).collect::<Vec<_>>());
    let owned_b = cv_args(&model_b);
    let stdout_b = run_ok(&owned_b.iter().map(String::as_str).collect::<Vec<_>>());

    // identical stdout apart from nothing: seeds pin the whole run
    assert_eq!(stdout_a, stdout_b);
    assert!(stdout_a.contains("train_scale=0.75"), "stdout: {stdout_a}");
    assert!(stdout_a.contains("validation_scale=0.25"));
    let best: Vec<&str> = stdout_a
        .lines()
        .filter(|l| l.starts_with("best_lambda=") || l.starts_with("best_rank="))
        .collect();
    assert_eq!(best.len(), 2);

    let bytes_a = std::fs::read(&model_a).unwrap();
    let bytes_b = std::fs::read(&model_b).unwrap();
    assert_eq!(bytes_a, bytes_b);

    // chain the chosen lambda into a plain training run
    let lambda = stdout_a
        .lines()
        .find_map(|l| l.strip_prefix("best_lambda="))
        .unwrap()
        .to_string();
    let trained = path_str(dir.path(), "trained.model");
    let stdout = run_ok(&[
        "train", "--obs", &obs, "--lambda", &lambda, "--rank", "5", "--iters", "100", "--seed",
        "11", "--out", &trained,
    ]);
    assert!(stdout.contains("objective="), "stdout: {stdout}");

    let pred_a = path_str(dir.path(), "pred_a.txt");
    let pred_b = path_str(dir.path(), "pred_b.txt");
    run_ok(&["predict", "--model", &trained, "--out", &pred_a]);
    run_ok(&["predict", "--model", &trained, "--out", &pred_b]);
    assert_eq!(
        std::fs::read(&pred_a).unwrap(),
        std::fs::read(&pred_b).unwrap()
    );

    // the persisted model scores the observations it was fit on
    let stdout = run_ok(&[
        "estimate",
        "--obs",
        &obs,
        "--model",
        &trained,
        "--metrics",
        "MSE",
    ]);
    assert_eq!(stdout.trim_end().lines().count(), 3);
}

// ── Sweeps ────────────────────────────────────────────────────────────

#[test]
fn full_reveal_table_equals_true_values_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let report = path_str(dir.path(), "report.csv");
    run_ok(&[
        "table1",
        "--users",
        "8",
        "--items",
        "10",
        "--trials",
        "1",
        "--alphas",
        "1",
        "--target",
        "1",
        "--metrics",
        "MAE",
        "--seed",
        "5",
        "--out",
        &report,
    ]);
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 15);
    for cells in &rows {
        // true_value and mean cells match as strings, rmse and std are 0
        assert_eq!(cells[4], cells[6], "row: {cells:?}");
        assert_eq!(cells[5], "0.0000000000000000e0");
        assert_eq!(cells[7], "0.0000000000000000e0");
        assert_eq!(cells[8], "1");
    }
}

#[test]
fn eval_sweep_csv_has_identical_snips_and_naive_rows_without_bias() {
    let dir = tempfile::tempdir().unwrap();
    let report = path_str(dir.path(), "report.csv");
    run_ok(&[
        "sweep",
        "--kind",
        "alpha-sweep-eval",
        "--users",
        "8",
        "--items",
        "10",
        "--trials",
        "2",
        "--alphas",
        "1",
        "--target",
        "0.25",
        "--metrics",
        "MAE",
        "--seed",
        "9",
        "--out",
        &report,
    ]);
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 18);
    for naive in rows.iter().filter(|c| c[2] == "Naive") {
        let snips = rows
            .iter()
            .find(|c| c[2] == "SNIPS" && c[1] == naive[1])
            .unwrap();
        assert_eq!(&naive[4..], &snips[4..], "predictor {}", naive[1]);
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = PathBuf::from(path_str(dir.path(), "sweep.cfg"));
    std::fs::write(
        &config,
        "# desk-scale smoke sweep\nkind=estimator-table\nusers=6\nitems=9\ntrials=1\nalphas=0.5\ntarget=0.2\nmetrics=MAE\nseed=4\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    let report = path_str(dir.path(), "report.csv");
    run_ok(&["sweep", "--config", cfg, "--out", &report]);
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|c| c[8] == "1"));

    let overridden = path_str(dir.path(), "override.csv");
    run_ok(&[
        "sweep",
        "--config",
        cfg,
        "--trials",
        "2",
        "--out",
        &overridden,
    ]);
    let rows = csv_rows(&overridden);
    assert!(rows.iter().all(|c| c[8] == "2"));

    std::fs::write(&config, "kind=estimator-table\nusers six\n").unwrap();
    let stderr = run_fail(&["sweep", "--config", cfg, "--out", &report]);
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");
    assert!(stderr.contains(":2:"), "stderr: {stderr}");
}

#[test]
fn train_real_sweep_persists_a_usable_model() {
    let dir = tempfile::tempdir().unwrap();
    let report = path_str(dir.path(), "report.csv");
    let model = path_str(dir.path(), "real.model");
    run_ok(&[
        "sweep",
        "--kind",
        "train-real",
        "--input",
        fixture(),
        "--rank",
        "4",
        "--lambdas",
        "0.01,0.1",
        "--folds",
        "3",
        "--iters",
        "80",
        "--seed",
        "2",
        "--model-out",
        &model,
        "--out",
        &report,
    ]);
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|c| c[0] == "REAL" && c[1] == "MF"));

    let pred = path_str(dir.path(), "pred.txt");
    let stdout = run_ok(&["predict", "--model", &model, "--out", &pred]);
    assert_eq!(stdout.trim(), "users=50 items=80 rank=4");
}
