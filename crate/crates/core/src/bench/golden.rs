use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::metrics::{default_grid, kde_marginals, marginal_accuracy, GridDensity};
use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::mc::{gibbs_probit, importance_weights, rqmc_points, GibbsOptions, WeightedSample};
use crate::model::PosteriorTarget;
use crate::rng::mix;

/// Two independent golden runs must agree to this accuracy per component.
pub const GOLDEN_AGREEMENT: f64 = 0.998;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldenSampler {
    /// Randomized-QMC importance sampling from a Gaussian approximation.
    RqmcIs,
    /// Probit data augmentation.
    Gibbs,
}

#[derive(Debug, Clone)]
pub struct GoldenOptions {
    pub sampler: GoldenSampler,
    /// Draws per run; two runs are made.
    pub draws: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Required marginal accuracy between the two runs.
    pub min_agreement: f64,
}

impl GoldenOptions {
    pub fn new(sampler: GoldenSampler, draws: usize, seed: u64) -> Self {
        GoldenOptions {
            sampler,
            draws,
            seed,
            grid_points: 256,
            min_agreement: GOLDEN_AGREEMENT,
        }
    }
}

/// Reference posterior summaries from long exact runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenReference {
    pub sampler: GoldenSampler,
    pub draws: usize,
    pub seed: u64,
    pub columns: Vec<String>,
    pub grids: Vec<Vec<f64>>,
    pub densities: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Half the gap between the two runs' means.
    pub mean_se: Vec<f64>,
    /// Marginal accuracy between the two runs, per component.
    pub agreement: Vec<f64>,
    pub log_evidence: Option<f64>,
}

impl GoldenReference {
    pub fn marginal(&self, j: usize) -> GridDensity {
        GridDensity {
            grid: self.grids[j].clone(),
            density: self.densities[j].clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn golden_run(target: &PosteriorTarget, q: &GaussianApprox, options: &GoldenOptions, run: u64) -> Result<WeightedSample> {
    let seed = mix(options.seed, &[run]);
    match options.sampler {
        GoldenSampler::RqmcIs => {
            let n = options.draws.next_power_of_two();
            Ok(importance_weights(q, target, rqmc_points(q, n, seed)?))
        }
        GoldenSampler::Gibbs => {
            let mut g = GibbsOptions::new(options.draws + options.draws / 10);
            g.burn_in = Some(options.draws / 10);
            g.init = Some(q.mean().clone());
            Ok(gibbs_probit(target, &g, seed)?.to_weighted())
        }
    }
}

/// Two independent long runs, checked against each other, pooled into a reference.
pub fn build_golden(target: &PosteriorTarget, q: &GaussianApprox, options: &GoldenOptions) -> Result<GoldenReference> {
    let a = golden_run(target, q, options, 0)?;
    let b = golden_run(target, q, options, 1)?;
    let p = target.dim();
    let (ma, mb) = (a.mean()?, b.mean()?);
    let pooled = WeightedSample::new(
        DMatrix::from_fn(a.len() + b.len(), p, |i, j| if i < a.len() { a.points[(i, j)] } else { b.points[(i - a.len(), j)] }),
        a.log_weights.iter().chain(&b.log_weights).copied().collect(),
    );
    let mean = pooled.mean()?;
    let cov = pooled.covariance()?;
    let grids: Vec<Vec<f64>> = (0..p)
        .map(|j| default_grid(mean[j], cov[(j, j)].sqrt(), options.grid_points))
        .collect();
    let ka = kde_marginals(&a, &grids)?;
    let kb = kde_marginals(&b, &grids)?;
    let agreement = ka
        .iter()
        .zip(&kb)
        .map(|(x, y)| marginal_accuracy(x, y))
        .collect::<Result<Vec<f64>>>()?;
    if let Some((j, v)) = agreement.iter().enumerate().find(|(_, v)| **v < options.min_agreement) {
        return Err(Error::Convergence(format!(
            "golden runs disagree on component {j}: marginal accuracy {v:.4} < {}",
            options.min_agreement
        )));
    }
    let densities = kde_marginals(&pooled, &grids)?.into_iter().map(|d| d.density).collect();
    let log_evidence = match options.sampler {
        GoldenSampler::RqmcIs => Some(pooled.log_evidence),
        GoldenSampler::Gibbs => None,
    };
    Ok(GoldenReference {
        sampler: options.sampler,
        draws: options.draws,
        seed: options.seed,
        columns: target.column_names().to_vec(),
        grids,
        densities,
        mean: mean.iter().copied().collect(),
        variance: cov.diagonal().iter().copied().collect(),
        mean_se: (0..p).map(|j| 0.5 * (ma[j] - mb[j]).abs()).collect(),
        agreement,
        log_evidence,
    })
}
