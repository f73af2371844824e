use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn mecop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mecop")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn check(o: Output) -> Output {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL: [&str; 6] = ["--draws", "40", "--burn-in", "100", "--copula-draws", "50"];

struct Fitted {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

/// One simulated dataset and fit shared by the tests that only read them.
fn fitted() -> &'static Fitted {
    static FIT: OnceLock<Fitted> = OnceLock::new();
    FIT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data.csv");
        check(mecop(&["simulate", "--n", "1000", "--sigma", "0.5", "--seed", "3", "--out", s(&data)]));
        let mut args = vec![
            "fit", "--input", s(&data), "--outcome", "y", "--treatment", "t", "--covariates", "x", "--levels",
            "--seed", "4", "--out", s(&root),
        ];
        args.extend(SMALL);
        check(mecop(&args));
        Fitted { _dir: dir, root }
    })
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn transition_matrix_columns_sum_to_one() {
    let f = fitted();
    let out = f.root.join("tm");
    check(mecop(&[
        "params", "--model", s(&f.root.join("model.json")), "--transition-matrix", "--cutoffs", "0.2,0.4,0.6,0.8",
        "--out", s(&out),
    ]));
    let rows = read_csv(&out.join("transition_matrix.csv"));
    assert_eq!(rows.len(), 25);
    for parent in 1..=5 {
        let total: f64 = rows
            .iter()
            .filter(|r| r[1] == parent.to_string())
            .map(|r| r[2].parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "parent bin {parent} sums to {total}");
    }
}

#[test]
fn fitted_rank_correlation_is_moderate_and_positive() {
    let f = fitted();
    let out = f.root.join("rho");
    check(mecop(&["params", "--model", s(&f.root.join("model.json")), "--spearman", "--out", s(&out)]));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("params.json")).unwrap()).unwrap();
    let rho = doc["results"]["spearman_rho"].as_f64().unwrap();
    assert!(rho > 0.3 && rho < 0.8, "rank correlation {rho}");
}

#[test]
fn params_writes_every_requested_table() {
    let f = fitted();
    let out = f.root.join("all");
    check(mecop(&[
        "params", "--model", s(&f.root.join("model.json")), "--upward", "--quantiles", "0.25,0.5", "--poverty-line",
        "2.0", "--counterfactual", "1.5,2.5,3.5", "--out", s(&out),
    ]));
    for name in ["upward_mobility.csv", "quantile_curves.csv", "poverty_curve.csv", "counterfactual_cdf.csv"] {
        assert!(read_csv(&out.join(name)).len() > 1, "{name} is empty");
    }
    let cdf: Vec<f64> = read_csv(&out.join("counterfactual_cdf.csv"))
        .iter()
        .map(|r| r.last().unwrap().parse().unwrap())
        .collect();
    assert!(cdf.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn report_is_reproducible() {
    let f = fitted();
    let model = f.root.join("model.json");
    let a = check(mecop(&["report", "--model", s(&model)])).stdout;
    let b = check(mecop(&["report", "--model", s(&model)])).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("Transition matrix") && text.contains("Rank-rank correlation"));
}

#[test]
fn other_schema_versions_are_refused() {
    let f = fitted();
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.root.join("model.json")).unwrap()).unwrap();
    doc["schema_version"] = 99.into();
    let path = f.root.join("future.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = mecop(&["params", "--model", s(&path), "--spearman", "--out", s(&f.root.join("future"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema version 99"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(mecop(&["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mecop(&["simulate", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(mecop(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "y,t\n1,2\n2,3\n").unwrap();
    // the seed is required
    let o = mecop(&["fit", "--input", s(&data), "--outcome", "y", "--treatment", "t"]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_rows(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("in.csv");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_rows(dir.path(), "y,t\n1.5,2\n2.5,3\n");
    let missing = mecop(&["fit", "--input", s(&data), "--outcome", "income", "--treatment", "t", "--seed", "1"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("income"));

    let data = write_rows(dir.path(), "y,t\n1.5,2\n-2.5,3\n");
    let negative = mecop(&["fit", "--input", s(&data), "--outcome", "y", "--treatment", "t", "--seed", "1"]);
    assert_eq!(negative.status.code(), Some(2));

    let data = write_rows(dir.path(), "y,t\n1.5,2\nabc,3\n");
    let text = mecop(&["fit", "--input", s(&data), "--outcome", "y", "--treatment", "t", "--levels", "--seed", "1"]);
    assert_eq!(text.status.code(), Some(2));
}

#[test]
fn rows_with_missing_values_are_dropped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    check(mecop(&["simulate", "--n", "300", "--seed", "5", "--out", s(&data)]));
    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str("NA,1.0,0.5\n2.0,,0.5\n");
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("fit");
    let mut args = vec![
        "fit", "--input", s(&data), "--outcome", "y", "--treatment", "t", "--covariates", "x", "--levels", "--seed",
        "6", "--naive", "--out", s(&out),
    ];
    args.extend(SMALL);
    let o = mecop(&args);
    assert!(matches!(o.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(doc["ingest"]["rows_read"], 302);
    assert_eq!(doc["ingest"]["rows_kept"], 300);
    assert_eq!(doc["ingest"]["dropped"], 2);
}
