use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use cpu_time::ProcessTime;
use serde::{Deserialize, Serialize};

use super::golden::{build_golden, GoldenOptions, GoldenReference, GoldenSampler};
use super::metrics::{iris, kde_marginals, marginal_accuracy, median, GridDensity};
use crate::approx::{improved_laplace_marginal_from, laplace, laplace_em, GaussianApprox, GridSpec, LaplaceEmOptions};
use crate::ep::{ep_fit, EpOptions};
use crate::error::{Error, Result};
use crate::mc::io::Timing;
use crate::mc::{
    gibbs_probit, hmc, importance_sample, rqmc_importance_sample, rwmh, GibbsOptions, HmcOptions, RwmhOptions,
    WeightedSample,
};
use crate::model::{ingest_csv, standardize, Dataset, Link, PosteriorTarget, Prior, PriorKind};
use crate::rng::mix;
use crate::smc::{temper_smc, SmcOptions};
use crate::special::trapezoid;

/// Resolves `name` to `<data_dir>/<name>.csv` unless it is itself a path to
/// a file, then ingests (label in the first column, intercept added) and
/// standardizes it.
pub fn load_dataset(name: &str, data_dir: &Path) -> Result<Dataset> {
    let direct = PathBuf::from(name);
    let path = if direct.is_file() { direct } else { data_dir.join(format!("{name}.csv")) };
    if !path.is_file() {
        return Err(Error::Config(format!("dataset `{name}` not found (looked for {})", path.display())));
    }
    standardize(&ingest_csv(&path, None, true)?)
}

/// Posterior target for a dataset under the default prior scales.
pub fn scenario_target(data: &Dataset, scenario: Scenario) -> Result<PosteriorTarget> {
    PosteriorTarget::new(data, Prior::default_for(scenario.prior, data.dim(), data.intercept), scenario.link)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub prior: PriorKind,
    pub link: Link,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.prior, self.link)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Laplace,
    ImprovedLaplace,
    LaplaceEm,
    Ep,
    Is,
    Rqmc,
    Rwmh,
    Gibbs,
    Hmc,
    Smc,
}

impl Method {
    pub fn is_sampler(&self) -> bool {
        matches!(self, Method::Is | Method::Rqmc | Method::Rwmh | Method::Gibbs | Method::Hmc | Method::Smc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// What IRIS charges a method for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    /// Log-posterior evaluations; deterministic.
    #[default]
    Evaluations,
    /// Process CPU seconds; varies between runs.
    Cpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub is: usize,
    pub rqmc: usize,
    pub rqmc_replications: usize,
    pub mcmc: usize,
    pub smc: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            is: 50_000,
            rqmc: 1 << 14,
            rqmc_replications: 8,
            mcmc: 50_000,
            smc: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoldenConfig {
    pub sampler: GoldenSampler,
    pub draws: usize,
    pub seed: u64,
    #[serde(default = "default_agreement")]
    pub min_agreement: f64,
}

fn default_agreement() -> f64 {
    super::golden::GOLDEN_AGREEMENT
}

impl Default for GoldenConfig {
    fn default() -> Self {
        GoldenConfig {
            sampler: GoldenSampler::RqmcIs,
            draws: 1 << 20,
            seed: 20_240_501,
            min_agreement: default_agreement(),
        }
    }
}

fn default_repetitions() -> usize {
    5
}

/// Experiment description read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub datasets: Vec<String>,
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<Method>,
    /// Explicit seeds; when absent, `repetitions` seeds are derived from `seed`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub golden: GoldenConfig,
    #[serde(default)]
    pub cost_model: CostModel,
    /// Directory where golden references are cached between runs.
    #[serde(default)]
    pub golden_cache: Option<PathBuf>,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: BenchConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.scenarios.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("datasets, scenarios and methods must be non-empty".into()));
        }
        if self.seed_list().is_empty() {
            return Err(Error::Config("at least one seed or repetition is required".into()));
        }
        let b = &self.budget;
        if b.is < 2 || b.mcmc < 10 || b.smc < 100 {
            return Err(Error::Config("budgets too small".into()));
        }
        if !b.rqmc.is_power_of_two() || b.rqmc_replications < 8 {
            return Err(Error::Config("RQMC needs a power-of-two size and at least 8 replications".into()));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.repetitions as u64).map(|r| mix(self.seed, &[r])).collect(),
        }
    }
}

/// Result of one (method, dataset, scenario, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub dataset: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub error: Option<String>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub marginal_accuracy: Vec<f64>,
    pub ef: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub log_evidence: Option<f64>,
    pub evaluations: u64,
}

/// Aggregate over seeds for one (method, dataset, scenario).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub dataset: String,
    pub scenario: Scenario,
    pub runs: usize,
    pub median_marginal_accuracy: Option<f64>,
    pub mse_mean: Vec<f64>,
    pub mse_variance: Vec<f64>,
    /// Posterior variance over MSE of the mean, per component.
    pub effective_sample_size: Vec<f64>,
    pub iris_mean: Vec<f64>,
    pub iris_variance: Vec<f64>,
    pub median_iris_mean: Option<f64>,
    pub median_iris_variance: Option<f64>,
    pub mean_ef: Option<f64>,
    pub mean_acceptance: Option<f64>,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenSummary {
    pub dataset: String,
    pub scenario: Scenario,
    pub error: Option<String>,
    pub reference: Option<GoldenReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cells: Vec<Cell>,
    pub summaries: Vec<Summary>,
    pub golden: Vec<GoldenSummary>,
}

/// Outputs that depend on the machine and are kept out of the report.
#[derive(Debug, Clone, Default)]
pub struct BenchTimings {
    pub timings: Vec<Timing>,
}

struct Outcome {
    mean: Vec<f64>,
    variance: Vec<f64>,
    marginals: Vec<GridDensity>,
    ef: Option<f64>,
    acceptance: Option<f64>,
    log_evidence: Option<f64>,
}

fn gaussian_outcome(q: &GaussianApprox, golden: Option<&GoldenReference>) -> Outcome {
    let p = q.dim();
    let marginals = match golden {
        Some(g) => (0..p).map(|j| GridDensity::gaussian(g.grids[j].clone(), q.mean()[j], q.sd(j))).collect(),
        None => Vec::new(),
    };
    Outcome {
        mean: q.mean().iter().copied().collect(),
        variance: (0..p).map(|j| q.covariance()[(j, j)]).collect(),
        marginals,
        ef: None,
        acceptance: None,
        log_evidence: q.log_evidence,
    }
}

fn sample_outcome(ws: &WeightedSample, golden: Option<&GoldenReference>) -> Result<Outcome> {
    let mean = ws.mean()?;
    let cov = ws.covariance()?;
    let marginals = match golden {
        Some(g) => kde_marginals(ws, &g.grids)?,
        None => Vec::new(),
    };
    Ok(Outcome {
        mean: mean.iter().copied().collect(),
        variance: cov.diagonal().iter().copied().collect(),
        marginals,
        ef: Some(ws.ef),
        acceptance: None,
        log_evidence: Some(ws.log_evidence),
    })
}

fn run_method(
    method: Method,
    target: &PosteriorTarget,
    proposal: &GaussianApprox,
    budget: &Budget,
    golden: Option<&GoldenReference>,
    seed: u64,
) -> Result<Outcome> {
    match method {
        Method::Laplace => Ok(gaussian_outcome(&laplace(target)?, golden)),
        Method::Ep => Ok(gaussian_outcome(proposal, golden)),
        Method::LaplaceEm => Ok(gaussian_outcome(&laplace_em(target, &LaplaceEmOptions::default())?.approx, golden)),
        Method::ImprovedLaplace => {
            let base = laplace(target)?;
            let mut out = gaussian_outcome(&base, None);
            let mut marginals = Vec::new();
            for j in 0..target.dim() {
                let curve = improved_laplace_marginal_from(target, &base, j, GridSpec::default())?;
                let m = trapezoid(&curve.grid, &curve.grid.iter().zip(&curve.density).map(|(x, d)| x * d).collect::<Vec<_>>());
                let v = trapezoid(
                    &curve.grid,
                    &curve.grid.iter().zip(&curve.density).map(|(x, d)| (x - m).powi(2) * d).collect::<Vec<_>>(),
                );
                out.mean[j] = m;
                out.variance[j] = v;
                marginals.push(GridDensity::new(curve.grid, curve.density)?);
            }
            if golden.is_some() {
                out.marginals = marginals;
            }
            out.log_evidence = None;
            Ok(out)
        }
        Method::Is => sample_outcome(&importance_sample(proposal, target, budget.is, seed)?, golden),
        Method::Rqmc => {
            let r = rqmc_importance_sample(proposal, target, budget.rqmc, budget.rqmc_replications, seed)?;
            // one replication is the estimator being assessed
            let mut out = sample_outcome(&r.replications[0], golden)?;
            out.log_evidence = Some(r.log_evidence[0]);
            Ok(out)
        }
        Method::Rwmh => {
            let t = rwmh(target, proposal, &RwmhOptions::new(budget.mcmc), seed)?;
            let mut out = sample_outcome(&t.to_weighted(), golden)?;
            out.ef = None;
            out.log_evidence = None;
            out.acceptance = Some(t.acceptance_rate);
            Ok(out)
        }
        Method::Hmc => {
            let t = hmc(target, proposal, &HmcOptions::new(budget.mcmc), seed)?;
            let mut out = sample_outcome(&t.to_weighted(), golden)?;
            out.ef = None;
            out.log_evidence = None;
            out.acceptance = Some(t.acceptance_rate);
            Ok(out)
        }
        Method::Gibbs => {
            let mut o = GibbsOptions::new(budget.mcmc);
            o.init = Some(proposal.mean().clone());
            let t = gibbs_probit(target, &o, seed)?;
            let mut out = sample_outcome(&t.to_weighted(), golden)?;
            out.ef = None;
            out.log_evidence = None;
            out.acceptance = Some(t.acceptance_rate);
            Ok(out)
        }
        Method::Smc => {
            let ps = temper_smc(proposal, target, &SmcOptions::new(budget.smc), seed)?;
            let mut out = sample_outcome(&ps.to_weighted(), golden)?;
            out.log_evidence = Some(ps.log_evidence);
            out.acceptance = ps.acceptance.iter().copied().reduce(f64::min);
            Ok(out)
        }
    }
}

fn golden_for(config: &BenchConfig, dataset: &str, scenario: Scenario, target: &PosteriorTarget, q: &GaussianApprox) -> Result<GoldenReference> {
    let g = &config.golden;
    let cache = config.golden_cache.as_ref().map(|dir| {
        dir.join(format!(
            "golden_{dataset}_{}_{}_{}_{}_{}.json",
            scenario.prior,
            scenario.link,
            serde_json::to_value(g.sampler).unwrap().as_str().unwrap(),
            g.draws,
            g.seed
        ))
    });
    if let Some(path) = &cache {
        if let Ok(text) = std::fs::read_to_string(path) {
            return GoldenReference::from_json(&text);
        }
    }
    let sampler = if g.sampler == GoldenSampler::Gibbs && scenario.link != Link::Probit {
        GoldenSampler::RqmcIs
    } else {
        g.sampler
    };
    let mut options = GoldenOptions::new(sampler, g.draws, g.seed);
    options.min_agreement = g.min_agreement;
    let reference = build_golden(target, q, &options)?;
    if let Some(path) = &cache {
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(path, reference.to_json()?)?;
    }
    Ok(reference)
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(config: &BenchConfig, cells: &[Cell], golden: &[GoldenSummary], timings: &[Timing]) -> Vec<Summary> {
    let mut groups: BTreeMap<(String, Scenario, Method), Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        groups.entry((c.dataset.clone(), c.scenario, c.method)).or_default().push(i);
    }
    let cost = |idx: &[usize]| -> f64 {
        match config.cost_model {
            CostModel::Evaluations => idx.iter().map(|&i| cells[i].evaluations as f64).sum::<f64>() / idx.len() as f64,
            CostModel::Cpu => idx.iter().map(|&i| timings[i].cpu_seconds).sum::<f64>() / idx.len() as f64,
        }
    };
    let mut out = Vec::new();
    let mut mse_cache: BTreeMap<(String, Scenario, Method), (Vec<f64>, Vec<f64>, f64)> = BTreeMap::new();
    for ((dataset, scenario, method), idx) in &groups {
        let ok: Vec<usize> = idx.iter().copied().filter(|&i| cells[i].error.is_none()).collect();
        let reference = golden
            .iter()
            .find(|g| &g.dataset == dataset && g.scenario == *scenario)
            .and_then(|g| g.reference.as_ref());
        let (mse_mean, mse_variance) = match (reference, ok.is_empty()) {
            (Some(r), false) => {
                let p = r.mean.len();
                let mse = |f: &dyn Fn(&Cell, usize) -> f64, truth: &[f64]| -> Vec<f64> {
                    (0..p)
                        .map(|j| ok.iter().map(|&i| (f(&cells[i], j) - truth[j]).powi(2)).sum::<f64>() / ok.len() as f64)
                        .collect()
                };
                (mse(&|c, j| c.mean[j], &r.mean), mse(&|c, j| c.variance[j], &r.variance))
            }
            _ => (Vec::new(), Vec::new()),
        };
        let ess = match reference {
            Some(r) if !mse_mean.is_empty() => r.variance.iter().zip(&mse_mean).map(|(v, m)| v / m).collect(),
            _ => Vec::new(),
        };
        let mas: Vec<f64> = ok.iter().flat_map(|&i| cells[i].marginal_accuracy.iter().copied()).collect();
        let c = if ok.is_empty() { 0.0 } else { cost(&ok) };
        mse_cache.insert((dataset.clone(), *scenario, *method), (mse_mean.clone(), mse_variance.clone(), c));
        out.push(Summary {
            method: *method,
            dataset: dataset.clone(),
            scenario: *scenario,
            runs: ok.len(),
            median_marginal_accuracy: (!mas.is_empty()).then(|| median(&mas)),
            mse_mean,
            mse_variance,
            effective_sample_size: ess,
            iris_mean: Vec::new(),
            iris_variance: Vec::new(),
            median_iris_mean: None,
            median_iris_variance: None,
            mean_ef: mean_of(ok.iter().filter_map(|&i| cells[i].ef)),
            mean_acceptance: mean_of(ok.iter().filter_map(|&i| cells[i].acceptance_rate)),
            mean_cost: c,
        });
    }
    for s in out.iter_mut().filter(|s| s.method.is_sampler()) {
        let Some((is_mean, is_var, is_cost)) = mse_cache.get(&(s.dataset.clone(), s.scenario, Method::Is)) else {
            continue;
        };
        let ratio = |m: &[f64], base: &[f64]| -> Vec<f64> {
            m.iter().zip(base).map(|(a, b)| iris(*a, s.mean_cost, *b, *is_cost).unwrap_or(f64::NAN)).collect()
        };
        s.iris_mean = ratio(&s.mse_mean, is_mean);
        s.iris_variance = ratio(&s.mse_variance, is_var);
        s.median_iris_mean = (!s.iris_mean.is_empty()).then(|| median(&s.iris_mean));
        s.median_iris_variance = (!s.iris_variance.is_empty()).then(|| median(&s.iris_variance));
    }
    out
}

/// Runs every configured cell; failures are recorded and the run continues.
pub fn run_benchmark(config: &BenchConfig, data_dir: &Path) -> Result<(BenchReport, BenchTimings)> {
    config.validate()?;
    let seeds = config.seed_list();
    let mut cells = Vec::new();
    let mut golden = Vec::new();
    let mut timings = Vec::new();
    for dataset in &config.datasets {
        let data = load_dataset(dataset, data_dir);
        for &scenario in &config.scenarios {
            let prepared = data.as_ref().map_err(|e| e.to_string()).and_then(|d| {
                let target = scenario_target(d, scenario).map_err(|e| e.to_string())?;
                let (q, _) = ep_fit(&target, &EpOptions::default()).map_err(|e| format!("EP proposal: {e}"))?;
                Ok((target, q))
            });
            let reference = match &prepared {
                Ok((target, q)) => golden_for(config, dataset, scenario, target, q).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            golden.push(GoldenSummary {
                dataset: dataset.clone(),
                scenario,
                error: reference.as_ref().err().cloned(),
                reference: reference.as_ref().ok().cloned(),
            });
            for &method in &config.methods {
                for &seed in &seeds {
                    let wall = Instant::now();
                    let cpu = ProcessTime::now();
                    let mut cell = Cell {
                        method,
                        dataset: dataset.clone(),
                        scenario,
                        seed,
                        error: None,
                        mean: Vec::new(),
                        variance: Vec::new(),
                        marginal_accuracy: Vec::new(),
                        ef: None,
                        acceptance_rate: None,
                        log_evidence: None,
                        evaluations: 0,
                    };
                    match &prepared {
                        Err(e) => cell.error = Some(e.clone()),
                        Ok((target, q)) => {
                            let fresh = target.clone();
                            let r = reference.as_ref().ok();
                            match run_method(method, &fresh, q, &config.budget, r, seed) {
                                Ok(o) => {
                                    if let Some(r) = r {
                                        cell.marginal_accuracy = o
                                            .marginals
                                            .iter()
                                            .enumerate()
                                            .map(|(j, m)| marginal_accuracy(m, &r.marginal(j)).unwrap_or(f64::NAN))
                                            .collect();
                                    }
                                    cell.mean = o.mean;
                                    cell.variance = o.variance;
                                    cell.ef = o.ef;
                                    cell.acceptance_rate = o.acceptance;
                                    cell.log_evidence = o.log_evidence;
                                }
                                Err(e) => cell.error = Some(e.to_string()),
                            }
                            cell.evaluations = fresh.evaluations();
                        }
                    }
                    timings.push(Timing {
                        stage: format!("{method} {dataset} {scenario} {seed}"),
                        wall_seconds: wall.elapsed().as_secs_f64(),
                        cpu_seconds: cpu.elapsed().as_secs_f64(),
                    });
                    cells.push(cell);
                }
            }
        }
    }
    let summaries = summarize(config, &cells, &golden, &timings);
    Ok((
        BenchReport {
            config: config.clone(),
            cells,
            summaries,
            golden,
        },
        BenchTimings { timings },
    ))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `report.json`, `summary.csv`, `cells.csv`, `marginal_accuracy.csv`,
/// `iris.csv`, and `timings.json` (the only machine-dependent file).
pub fn write_report(report: &BenchReport, timings: &BenchTimings, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    crate::mc::io::write_timings(&dir.join("timings.json"), &timings.timings)?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "dataset", "scenario", "method", "runs", "mean_ef", "mean_acceptance", "median_ma",
        "median_iris_mean", "median_iris_variance", "mean_cost",
    ])?;
    for s in &report.summaries {
        w.write_record([
            s.dataset.clone(),
            s.scenario.to_string(),
            s.method.to_string(),
            s.runs.to_string(),
            opt(s.mean_ef),
            opt(s.mean_acceptance),
            opt(s.median_marginal_accuracy),
            opt(s.median_iris_mean),
            opt(s.median_iris_variance),
            s.mean_cost.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
    w.write_record(["dataset", "scenario", "method", "seed", "error", "ef", "acceptance", "log_evidence", "evaluations", "mean"])?;
    for c in &report.cells {
        w.write_record([
            c.dataset.clone(),
            c.scenario.to_string(),
            c.method.to_string(),
            c.seed.to_string(),
            c.error.clone().unwrap_or_default(),
            opt(c.ef),
            opt(c.acceptance_rate),
            opt(c.log_evidence),
            c.evaluations.to_string(),
            join(&c.mean),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("marginal_accuracy.csv"))?;
    w.write_record(["dataset", "scenario", "method", "seed", "component", "marginal_accuracy"])?;
    for c in &report.cells {
        for (j, ma) in c.marginal_accuracy.iter().enumerate() {
            w.write_record([c.dataset.clone(), c.scenario.to_string(), c.method.to_string(), c.seed.to_string(), j.to_string(), ma.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("iris.csv"))?;
    w.write_record(["dataset", "scenario", "method", "component", "iris_mean", "iris_variance", "effective_sample_size"])?;
    for s in report.summaries.iter().filter(|s| !s.iris_mean.is_empty()) {
        for j in 0..s.iris_mean.len() {
            w.write_record([
                s.dataset.clone(),
                s.scenario.to_string(),
                s.method.to_string(),
                j.to_string(),
                s.iris_mean[j].to_string(),
                s.iris_variance[j].to_string(),
                s.effective_sample_size.get(j).map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
