use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use binreg::approx::{improved_laplace_marginal_from, laplace, laplace_em, GaussianApprox, GridSpec, LaplaceEmOptions};
use binreg::bench::{load_dataset, run_benchmark, scenario_target, write_report, BenchConfig, Scenario};
use binreg::ep::{ep_fit, EpOptions};
use binreg::mc::io::{write_timings, write_trace, write_weighted, Timing};
use binreg::mc::{
    gibbs_probit, hmc, importance_sample, rqmc_importance_sample, rwmh, GibbsOptions, HmcOptions, RwmhOptions,
};
use binreg::model::{ingest_csv, standardize, write_csv, Link, PosteriorTarget, PriorKind};
use binreg::smc::{temper_smc, SmcOptions};
use binreg::varsel::{
    binary_smc_varsel, enumerate_varsel, gamma_gibbs, selectable, write_inclusion, write_top_models, EvidenceMethod,
    VarselSmcOptions,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cpu_time::ProcessTime;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "binreg", version, about = "Bayesian probit and logit regression: approximations, samplers, variable selection")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory holding `<name>.csv` datasets.
    #[arg(long, global = true, env = "BINREG_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a CSV dataset (label first), standardize it and write it back out.
    Ingest(IngestArgs),
    /// Gaussian approximation of the posterior.
    Approx(ApproxArgs),
    /// Draw posterior samples.
    Sample(SampleArgs),
    /// Posterior inclusion probabilities of the covariates.
    Varsel(VarselArgs),
    /// Run a benchmark described by a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// Dataset name under the data directory, or a path to a CSV file.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value = "gaussian")]
    prior: PriorKind,
    #[arg(long, default_value = "probit")]
    link: Link,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    dataset: String,
    /// Label column name; defaults to the first column.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproxMethod {
    Laplace,
    ImprovedLaplace,
    LaplaceEm,
    Ep,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "ep")]
    method: ApproxMethod,
    /// Grid points per marginal curve (improved Laplace).
    #[arg(long, default_value_t = 64)]
    grid_points: usize,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SampleMethod {
    Is,
    Rqmc,
    Rwmh,
    Gibbs,
    Hmc,
    Smc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProposalKind {
    Ep,
    Laplace,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    method: SampleMethod,
    /// Draws, iterations or particles depending on the method.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Gaussian approximation used as proposal, preconditioner or start.
    #[arg(long, value_enum, default_value = "ep")]
    proposal: ProposalKind,
    /// Scrambled replications for RQMC.
    #[arg(long, default_value_t = 8)]
    replications: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarselMethod {
    Enumerate,
    Smc,
    Gibbs,
}

#[derive(Args)]
struct VarselArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "smc")]
    method: VarselMethod,
    /// Particles (smc) or evidence-evaluation budget (gibbs).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Evidence estimator: laplace, ep or is:<draws>.
    #[arg(long, default_value = "is:512")]
    evidence: EvidenceMethod,
    /// Rows of the top-models table.
    #[arg(long, default_value_t = 20)]
    top: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

struct Clock {
    wall: Instant,
    cpu: ProcessTime,
}

impl Clock {
    fn start() -> Self {
        Clock {
            wall: Instant::now(),
            cpu: ProcessTime::now(),
        }
    }

    fn stop(&self, stage: &str) -> Timing {
        Timing {
            stage: stage.to_string(),
            wall_seconds: self.wall.elapsed().as_secs_f64(),
            cpu_seconds: self.cpu.elapsed().as_secs_f64(),
        }
    }
}

fn data_dir(cli: &Cli) -> PathBuf {
    if let Some(d) = &cli.data_dir {
        return d.clone();
    }
    let local = PathBuf::from("data");
    if local.is_dir() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_target(common: &Common, dir: &Path) -> Result<PosteriorTarget> {
    let data = load_dataset(&common.dataset, dir)?;
    Ok(scenario_target(&data, Scenario { prior: common.prior, link: common.link })?)
}

fn run_meta(common: &Common, method: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("dataset".into(), json!(common.dataset));
    m.insert("prior".into(), json!(common.prior));
    m.insert("link".into(), json!(common.link));
    m.insert("method".into(), json!(method));
    m
}

fn ingest(args: &IngestArgs, dir: &Path) -> Result<()> {
    let direct = PathBuf::from(&args.dataset);
    let path = if direct.is_file() { direct } else { dir.join(format!("{}.csv", args.dataset)) };
    let raw = ingest_csv(&path, args.label.as_deref(), !args.no_intercept)?;
    let data = standardize(&raw)?;
    fs::create_dir_all(&args.out)?;
    write_csv(&data, args.out.join("data.csv"))?;
    let st = data.standardization.as_ref().context("standardization missing")?;
    fs::write(args.out.join("standardization.json"), st.to_json()?)?;
    log::info!("{} rows, {} columns", data.n_obs(), data.dim());
    Ok(())
}

fn ep_approx(target: &PosteriorTarget) -> Result<GaussianApprox> {
    Ok(ep_fit(target, &EpOptions::default())?.0)
}

fn approx(args: &ApproxArgs, dir: &Path) -> Result<()> {
    let c = &args.common;
    let target = load_target(c, dir)?;
    fs::create_dir_all(&c.out)?;
    let clock = Clock::start();
    let name = args.method.to_possible_value().unwrap().get_name().to_string();
    let mut meta = run_meta(c, &name);
    let q = match args.method {
        ApproxMethod::Laplace => laplace(&target)?,
        ApproxMethod::Ep => ep_approx(&target)?,
        ApproxMethod::LaplaceEm => {
            let r = laplace_em(&target, &LaplaceEmOptions::default())?;
            meta.insert("prior_variances".into(), json!(r.variances));
            meta.insert("iterations".into(), json!(r.iterations));
            meta.insert("converged".into(), json!(r.converged));
            r.approx
        }
        ApproxMethod::ImprovedLaplace => {
            let base = laplace(&target)?;
            let grid = GridSpec { points: args.grid_points, ..GridSpec::default() };
            let mut w = csv::Writer::from_path(c.out.join("marginals.csv"))?;
            w.write_record(["component", "name", "x", "density"])?;
            for j in 0..target.dim() {
                let curve = improved_laplace_marginal_from(&target, &base, j, grid)?;
                for (x, d) in curve.grid.iter().zip(&curve.density) {
                    w.write_record([&j.to_string(), &target.column_names()[j], &format!("{x:e}"), &format!("{d:e}")])?;
                }
            }
            w.flush()?;
            base
        }
    };
    let timings = vec![clock.stop(&name)];
    fs::write(c.out.join("approx.json"), q.to_json()?)?;
    meta.insert("columns".into(), json!(target.column_names()));
    meta.insert("log_evidence".into(), json!(q.log_evidence));
    write_json(&c.out.join("run.json"), &Value::Object(meta))?;
    write_timings(&c.out.join("timings.json"), &timings)?;
    Ok(())
}

fn sample(args: &SampleArgs, dir: &Path) -> Result<()> {
    let c = &args.common;
    let target = load_target(c, dir)?;
    fs::create_dir_all(&c.out)?;
    let names = target.column_names().to_vec();
    let method = args.method.to_possible_value().unwrap().get_name().to_string();
    let mut meta = run_meta(c, &method);
    let mut timings = Vec::new();

    let clock = Clock::start();
    let q = match args.proposal {
        ProposalKind::Ep => ep_approx(&target)?,
        ProposalKind::Laplace => laplace(&target)?,
    };
    timings.push(clock.stop("proposal"));
    meta.insert(
        "proposal".into(),
        json!(args.proposal.to_possible_value().unwrap().get_name()),
    );

    let path = c.out.join("samples.csv");
    let clock = Clock::start();
    match args.method {
        SampleMethod::Is => {
            let ws = importance_sample(&q, &target, args.n, c.seed)?;
            timings.push(clock.stop(&method));
            meta.insert("ef".into(), json!(ws.ef));
            meta.insert("log_evidence".into(), json!(ws.log_evidence));
            write_weighted(&path, &names, &ws, c.seed, meta)?;
        }
        SampleMethod::Rqmc => {
            let r = rqmc_importance_sample(&q, &target, args.n, args.replications, c.seed)?;
            timings.push(clock.stop(&method));
            meta.insert("replications".into(), json!(args.replications));
            meta.insert("log_evidence".into(), json!(r.pooled_log_evidence()));
            meta.insert("replication_log_evidence".into(), json!(r.log_evidence));
            meta.insert("mean".into(), json!(r.mean().iter().collect::<Vec<_>>()));
            meta.insert("mean_variance".into(), json!(r.mean_variance().iter().collect::<Vec<_>>()));
            meta.insert("note".into(), json!("points of replication 0"));
            write_weighted(&path, &names, &r.replications[0], c.seed, meta)?;
        }
        SampleMethod::Rwmh | SampleMethod::Gibbs | SampleMethod::Hmc => {
            let trace = match args.method {
                SampleMethod::Rwmh => rwmh(&target, &q, &RwmhOptions::new(args.n), c.seed)?,
                SampleMethod::Hmc => hmc(&target, &q, &HmcOptions::new(args.n), c.seed)?,
                _ => {
                    let mut o = GibbsOptions::new(args.n);
                    o.init = Some(q.mean().clone());
                    gibbs_probit(&target, &o, c.seed)?
                }
            };
            timings.push(clock.stop(&method));
            meta.insert("acceptance_rate".into(), json!(trace.acceptance_rate));
            write_trace(&path, &names, &trace, c.seed, meta)?;
        }
        SampleMethod::Smc => {
            let ps = temper_smc(&q, &target, &SmcOptions::new(args.n), c.seed)?;
            timings.push(clock.stop(&method));
            for s in &ps.stages {
                timings.push(Timing {
                    stage: format!("smc stage {}", s.stage),
                    wall_seconds: s.wall_seconds,
                    cpu_seconds: f64::NAN,
                });
            }
            ps.write_stage_log(&c.out.join("stages.jsonl"))?;
            meta.insert("ladder".into(), json!(ps.ladder));
            meta.insert("log_evidence".into(), json!(ps.log_evidence));
            meta.insert("acceptance".into(), json!(ps.acceptance));
            write_weighted(&path, &names, &ps.to_weighted(), c.seed, meta)?;
        }
    }
    write_timings(&c.out.join("timings.json"), &timings)?;
    Ok(())
}

fn varsel(args: &VarselArgs, dir: &Path) -> Result<()> {
    let c = &args.common;
    let target = load_target(c, dir)?;
    fs::create_dir_all(&c.out)?;
    let offset = target.dim() - selectable(&target);
    let names = target.column_names()[offset..].to_vec();
    let method = args.method.to_possible_value().unwrap().get_name().to_string();
    let mut meta = run_meta(c, &method);
    meta.insert("evidence".into(), json!(args.evidence.to_string()));
    meta.insert("seed".into(), json!(c.seed));
    let clock = Clock::start();
    let (inclusion, top) = match args.method {
        VarselMethod::Enumerate => {
            let e = enumerate_varsel(&target, args.evidence, c.seed)?;
            meta.insert("models".into(), json!(e.models.len()));
            (e.inclusion.clone(), Some(e.top(args.top)))
        }
        VarselMethod::Smc => {
            let ps = binary_smc_varsel(&target, &VarselSmcOptions::new(args.n, args.evidence), c.seed)?;
            meta.insert("particles".into(), json!(args.n));
            meta.insert("ladder".into(), json!(ps.ladder));
            meta.insert("log_normalizer".into(), json!(ps.log_normalizer));
            meta.insert("evaluations".into(), json!(ps.evaluations));
            meta.insert("stages".into(), serde_json::to_value(&ps.stages)?);
            let top = ps.model_frequencies().into_iter().take(args.top).collect();
            (ps.inclusion_probabilities(), Some(top))
        }
        VarselMethod::Gibbs => {
            let r = gamma_gibbs(&target, args.evidence, args.n as u64, c.seed)?;
            meta.insert("evaluations".into(), json!(r.evaluations));
            meta.insert("iterations".into(), json!(r.iterations));
            meta.insert("acceptance_rate".into(), json!(r.acceptance_rate));
            (r.inclusion, None)
        }
    };
    let timings = vec![clock.stop(&method)];
    write_inclusion(&c.out.join("inclusion.csv"), &names, &inclusion)?;
    if let Some(top) = top {
        write_top_models(&c.out.join("top_models.csv"), &names, &top)?;
    }
    write_json(&c.out.join("run.json"), &Value::Object(meta))?;
    write_timings(&c.out.join("timings.json"), &timings)?;
    Ok(())
}

fn bench(args: &BenchArgs, dir: &Path) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let config = BenchConfig::from_json(&text)?;
    let (report, timings) = run_benchmark(&config, dir)?;
    write_report(&report, &timings, &args.out)?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; see report.json", report.cells.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let dir = data_dir(&cli);
    match &cli.command {
        Command::Ingest(a) => ingest(a, &dir),
        Command::Approx(a) => approx(a, &dir),
        Command::Sample(a) => sample(a, &dir),
        Command::Varsel(a) => varsel(a, &dir),
        Command::Bench(a) => bench(a, &dir),
    }
}
