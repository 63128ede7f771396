use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn binreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binreg"))
        .args(args)
        .env("BINREG_DATA_DIR", data_dir())
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = binreg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Every file except the timing sidecar, sorted by name.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_writes_standardized_data_and_transform() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["ingest", "--dataset", "plasma", "--out", s(tmp.path())]);
    let csv = fs::read_to_string(tmp.path().join("data.csv")).unwrap();
    assert!(csv.starts_with("y,(Intercept),"));
    let st: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("standardization.json")).unwrap()).unwrap();
    assert!(st["columns"].as_array().unwrap().len() >= 2);
}

#[test]
fn approx_writes_a_loadable_gaussian() {
    let tmp = tempfile::tempdir().unwrap();
    for method in ["laplace", "ep", "laplace-em", "improved-laplace"] {
        let out = tmp.path().join(method);
        let prior = if method == "laplace-em" { "cauchy" } else { "gaussian" };
        ok(&["approx", "--dataset", "plasma", "--prior", prior, "--method", method, "--grid-points", "8", "--out", s(&out)]);
        let q = binreg::approx::GaussianApprox::read_json(out.join("approx.json")).unwrap();
        assert_eq!(q.dim(), 3);
    }
    let curves = fs::read_to_string(tmp.path().join("improved-laplace/marginals.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 3 * 8);
}

#[test]
fn laplace_em_with_gaussian_prior_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = binreg(&["approx", "--dataset", "plasma", "--method", "laplace-em", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn samples_are_identical_across_repeats_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for method in ["is", "rqmc", "rwmh", "gibbs", "hmc", "smc"] {
        let a = tmp.path().join(format!("{method}_a"));
        let b = tmp.path().join(format!("{method}_b"));
        let common = ["sample", "--dataset", "pima", "--method", method, "--n", "512", "--seed", "9"];
        ok(&[&["--threads", "1"], &common[..], &["--out", s(&a)]].concat());
        ok(&[&["--threads", "3"], &common[..], &["--out", s(&b)]].concat());
        let (fa, fb) = (artifacts(&a), artifacts(&b));
        assert!(!fa.is_empty());
        assert!(fa == fb, "{method} artifacts differ");
        assert!(a.join("timings.json").is_file());
    }
}

#[test]
fn sample_output_reads_back() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["sample", "--dataset", "pima", "--method", "is", "--n", "2000", "--out", s(tmp.path())]);
    let file = binreg::mc::io::read_samples(&tmp.path().join("samples.csv")).unwrap();
    let ws = file.to_weighted();
    assert_eq!(ws.len(), 2000);
    assert!(ws.ef > 0.9);
}

#[test]
fn varsel_methods_write_inclusion_tables() {
    let tmp = tempfile::tempdir().unwrap();
    for method in ["enumerate", "smc", "gibbs"] {
        let out = tmp.path().join(method);
        ok(&["varsel", "--dataset", "plasma", "--method", method, "--n", "300", "--evidence", "laplace", "--out", s(&out)]);
        let inc = fs::read_to_string(out.join("inclusion.csv")).unwrap();
        let rows: Vec<f64> = inc.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn varsel_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let common = ["varsel", "--dataset", "plasma", "--method", "smc", "--n", "100", "--evidence", "is:64", "--seed", "5"];
    ok(&[&["--threads", "1"], &common[..], &["--out", s(&a)]].concat());
    ok(&[&["--threads", "1"], &common[..], &["--out", s(&b)]].concat());
    assert!(artifacts(&a) == artifacts(&b));
}

#[test]
fn bench_config_runs_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{
            "datasets": ["plasma"],
            "scenarios": [{"prior": "gaussian", "link": "probit"}],
            "methods": ["laplace", "is"],
            "seeds": [1, 2],
            "budget": {"is": 2000},
            "golden": {"sampler": "rqmc-is", "draws": 32768, "seed": 3, "min_agreement": 0.98}
        }"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--threads", "1", "bench", "--config", s(&config), "--out", s(&a)]);
    ok(&["--threads", "1", "bench", "--config", s(&config), "--out", s(&b)]);
    let fa = artifacts(&a);
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for f in ["report.json", "summary.csv", "cells.csv", "marginal_accuracy.csv", "iris.csv"] {
        assert!(names.contains(&f), "missing {f}");
    }
    assert!(fa == artifacts(&b));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = binreg(&["sample", "--dataset", "no-such-data", "--method", "is", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    let out = binreg(&["sample", "--dataset", "pima", "--method", "nope", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    let out = binreg(&["varsel", "--dataset", "pima", "--evidence", "is:x", "--out", s(tmp.path())]);
    assert!(!out.status.success());
}
