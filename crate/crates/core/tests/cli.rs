use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privmap::io;

const BIN: &str = env!("CARGO_BIN_EXE_privmap");

const MODEL: &str = r#"{
  "x_labels": ["x0", "x1"],
  "y_labels": ["a", "b", "c"],
  "z_labels": ["a", "b", "c", "*"],
  "p_xy": [[0.3, 0.1, 0.1], [0.05, 0.25, 0.2]],
  "distortion": [[0, 1, 1, 0.5], [1, 0, 1, 0.5], [1, 1, 0, "inf"]],
  "delta": 0.3
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/adult_small.data").to_string()
}

#[test]
fn solve_writes_a_feasible_channel() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = write(dir.path(), "model.json", MODEL);
    let out = dir.path().join("out");
    let o = run(&["solve", "--model", s(&model_path), "--restarts", "3", "--seed", "5", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let model = io::load_model(&model_path).unwrap();
    let ch = io::load_channel_csv(&out.join("channel.csv"), &model).unwrap();
    model.check_feasible(&ch, 1e-9).unwrap();
    assert_eq!(ch.matrix()[(2, 3)], 0.0);

    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let leak = metrics["leakage"].as_f64().unwrap();
    let c0 = metrics["initial_cost"].as_f64().unwrap();
    let cz = metrics["posterior_cost"].as_f64().unwrap();
    assert!((leak - (c0 - cz)).abs() < 1e-12);
    assert!(metrics["distortion"].as_f64().unwrap() <= 0.3 + 1e-9);
    assert_eq!(metrics["certificate"]["condition_holds"], true);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = write(dir.path(), "model.json", MODEL);
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "sweep", "--model", s(&model_path), "--gamma-list", "0.25", "--delta-list", "0:0.25:0.5",
            "--restarts", "2", "--seed", "11", "--out-dir", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("sweep.csv")).unwrap()
    };
    assert_eq!(go("a"), go("b"));
    let solve = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["solve", "--model", s(&model_path), "--restarts", "4", "--seed", "2", "--out-dir", s(&out)]);
        assert!(o.status.success());
        fs::read(out.join("channel.csv")).unwrap()
    };
    assert_eq!(solve("c"), solve("d"));
}

#[test]
fn sweep_rows_and_units() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = write(dir.path(), "model.json", MODEL);
    let out = dir.path().join("out");
    let o = run(&[
        "sweep", "--model", s(&model_path), "--gamma-list", "0.1,0.5", "--restarts", "1", "--max-iter", "20",
        "--units", "bits", "--jobs", "1", "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "posterior_cost_bits"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    // Default list 0:0.1:1.5 for the omniscient baseline and two priors.
    assert_eq!(rows.len(), 3 * 16);
    for prior in ["omniscient", "gamma=0.1", "gamma=0.5"] {
        assert_eq!(rows.iter().filter(|r| &r[col("prior")] == prior).count(), 16);
    }
    for r in &rows {
        let nats: f64 = r[col("objective_nats")].parse().unwrap();
        let bits: f64 = r[col("objective_bits")].parse().unwrap();
        assert!((bits * std::f64::consts::LN_2 - nats).abs() <= 1e-15 * nats.abs().max(1.0));
        assert!(["converged", "max_iter"].contains(&&r[col("status")]));
    }
}

#[test]
fn dirichlet_solve_reports_bound_and_mc() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = write(dir.path(), "model.json", MODEL);
    let counts = r#"{"counts": [[300, 100, 100], [50, 250, 200]], "nu": 0.01}"#;
    let d = write(dir.path(), "dir.json", counts);
    let out = dir.path().join("out");
    let o = run(&[
        "solve", "--model", s(&model_path), "--dirichlet", s(&d), "--restarts", "2", "--mc-samples", "400",
        "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let lb = m["lower_bound"].as_f64().unwrap();
    let mean = m["mc_posterior_cost"].as_f64().unwrap();
    let se = m["mc_std_error"].as_f64().unwrap();
    assert!(se > 0.0);
    assert!(mean >= lb - 3.0 * se);
    assert!((lb + m["objective_nats"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn census_fixture_and_sweep_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("census");
    let o = run(&["census", "--input", &fixture(), "--delta", "0.5", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("74 read, 2 dropped"), "{stdout}");
    let model = io::load_model(&out.join("model.json")).unwrap();
    assert_eq!((model.nx(), model.ny(), model.nz()), (2, 18, 47));
    assert_eq!(model.delta(), 0.5);

    let counts = io::read_matrix_csv(fs::File::open(out.join("counts.csv")).unwrap(), "counts").unwrap();
    let row0: Vec<f64> = counts.matrix.row(0).to_vec();
    assert_eq!(&row0[..6], &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    assert_eq!(counts.matrix.sum(), 72.0);

    let sweep = dir.path().join("sweep");
    let o = run(&[
        "sweep", "--model", s(&out.join("model.json")), "--counts", s(&out.join("counts.csv")), "--nu-list", "0.05",
        "--delta-list", "0.5", "--restarts", "1", "--max-iter", "5", "--inner-max-iter", "50", "--mc-samples", "50",
        "--out-dir", s(&sweep),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("\nnu=0.05,") && text.contains("\nnominal/nu=0.05,"));
}

#[test]
fn validate_reports_support_levels() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = write(dir.path(), "model.json", MODEL);
    let o = run(&["validate", "--model", s(&model_path)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("holds"));

    let hole = write(dir.path(), "hole.json", r#"{"p_hat_xy": [[0.4, 0.0, 0.1], [0.1, 0.2, 0.2]]}"#);
    let o = run(&["validate", "--model", s(&model_path), "--prior", s(&hole)]);
    assert_eq!(o.status.code(), Some(2));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("support level: x-marginal"), "{text}");
    assert!(text.contains("failing clause(s): joint"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");

    let o = run(&["census", "--input", "/nonexistent/adult.data", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!out.exists(), "no partial output on failure");

    let o = run(&["solve", "--model", "/nonexistent/model.json", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(4));

    let bad = write(dir.path(), "bad.json", r#"{"p_xy": [[0.5, 0.0], [0.5, 0.0]], "delta": 0.1}"#);
    let o = run(&["solve", "--model", s(&bad), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let model_path = write(dir.path(), "model.json", MODEL);
    let o = run(&["solve", "--model", s(&model_path), "--epsilon", "0", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["solve", "--model", s(&model_path)]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["sweep", "--model", s(&model_path), "--nu-list", "0.1", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "--nu-list needs --counts");

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
