mod common;

use binreg::bench::{
    build_golden, kde_marginals, marginal_accuracy, median, run_benchmark, scenario_target, write_report, BenchConfig,
    GoldenOptions, GoldenSampler, Method, Scenario,
};
use binreg::ep::{ep_fit, EpOptions};
use binreg::mc::importance_sample;
use binreg::model::{Link, PriorKind};
use common::data_dir;

fn small_config(methods: &str, scenarios: &str, seeds: &str) -> BenchConfig {
    BenchConfig::from_json(&format!(
        r#"{{
            "datasets": ["plasma"],
            "scenarios": {scenarios},
            "methods": {methods},
            "seeds": {seeds},
            "budget": {{"is": 4000, "rqmc": 1024, "rqmc_replications": 8, "mcmc": 4000, "smc": 500}},
            "golden": {{"sampler": "rqmc-is", "draws": 65536, "seed": 3, "min_agreement": 0.98}}
        }}"#
    ))
    .unwrap()
}

#[test]
fn single_cell_config_gives_a_single_cell() {
    let c = small_config(r#"["is"]"#, r#"[{"prior": "gaussian", "link": "probit"}]"#, "[1]");
    let (report, timings) = run_benchmark(&c, &data_dir()).unwrap();
    assert!(report.golden[0].error.is_none(), "{:?}", report.golden[0].error);
    assert_eq!(report.cells.len(), 1);
    assert_eq!(timings.timings.len(), 1);
    let cell = &report.cells[0];
    assert!(cell.error.is_none(), "{:?}", cell.error);
    assert!(cell.marginal_accuracy.iter().all(|m| (0.0..=1.0).contains(m)));
    assert!(cell.ef.unwrap() > 0.5);
}

#[test]
fn failures_are_recorded_per_cell() {
    let mut c = small_config(
        r#"["gibbs", "laplace"]"#,
        r#"[{"prior": "gaussian", "link": "logit"}]"#,
        "[1, 2]",
    );
    c.datasets.push("no-such-dataset".into());
    let (report, _) = run_benchmark(&c, &data_dir()).unwrap();
    assert_eq!(report.cells.len(), 2 * 2 * 2);
    for cell in &report.cells {
        let should_fail = cell.dataset == "no-such-dataset" || cell.method == Method::Gibbs;
        assert_eq!(cell.error.is_some(), should_fail, "{cell:?}");
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let c = small_config(
        r#"["laplace", "ep", "is", "rwmh", "smc"]"#,
        r#"[{"prior": "cauchy", "link": "logit"}]"#,
        "[5, 6]",
    );
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (report, timings) = run_benchmark(&c, &data_dir()).unwrap();
        write_report(&report, &timings, d.path()).unwrap();
    }
    for name in ["report.json", "summary.csv", "cells.csv", "marginal_accuracy.csv", "iris.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dirs[0].path().join("report.json")).unwrap()).unwrap();
    let rwmh = report["summaries"].as_array().unwrap().iter().find(|s| s["method"] == "rwmh").unwrap();
    assert!(rwmh["median_iris_mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn importance_marginals_agree_with_an_independent_golden_run() {
    let data = binreg::bench::load_dataset("pima", &data_dir()).unwrap();
    let target = scenario_target(&data, Scenario { prior: PriorKind::Gaussian, link: Link::Probit }).unwrap();
    let (q, _) = ep_fit(&target, &EpOptions::default()).unwrap();
    let mut options = GoldenOptions::new(GoldenSampler::RqmcIs, 1 << 18, 11);
    options.min_agreement = 0.995;
    let golden = build_golden(&target, &q, &options).unwrap();
    let ws = importance_sample(&q, &target, 50_000, 12).unwrap();
    let kde = kde_marginals(&ws, &golden.grids).unwrap();
    let ma: Vec<f64> = kde.iter().enumerate().map(|(j, k)| marginal_accuracy(k, &golden.marginal(j)).unwrap()).collect();
    assert!(median(&ma) >= 0.99, "{ma:?}");
}

#[test]
fn bad_configs_are_rejected() {
    assert!(BenchConfig::from_json(r#"{"datasets": [], "scenarios": [], "methods": []}"#).is_err());
    assert!(BenchConfig::from_json(r#"{"datasets": ["x"], "scenarios": [{"prior": "gaussian", "link": "probit"}], "methods": ["nuts"]}"#).is_err());
    assert!(BenchConfig::from_json(
        r#"{"datasets": ["x"], "scenarios": [{"prior": "gaussian", "link": "probit"}], "methods": ["is"], "budget": {"is": 10, "rqmc": 1000, "rqmc_replications": 8, "mcmc": 100, "smc": 100}}"#
    )
    .is_err());
}
