
use crate::error::{Error, Result};
use crate::mc::WeightedSample;
use crate::special::{linspace, norm_pdf, trapezoid};

/// Density tabulated on an increasing grid; zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() != density.len() || grid.len() < 2 {
            return Err(Error::InvalidArgument("density grid needs at least two matching points".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("density grid must be strictly increasing".into()));
        }
        Ok(GridDensity { grid, density })
    }

    /// Gaussian density tabulated on `grid`.
    pub fn gaussian(grid: Vec<f64>, mean: f64, sd: f64) -> Self {
        let density = grid.iter().map(|x| norm_pdf((x - mean) / sd) / sd).collect();
        GridDensity { grid, density }
    }

    /// Linear interpolation, zero outside the grid.
    pub fn at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|v| *v <= x).clamp(1, g.len() - 1);
        let t = (x - g[k - 1]) / (g[k] - g[k - 1]);
        self.density[k - 1] * (1.0 - t) + self.density[k] * t
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

/// `1 − ½ ∫ |q − p|`, by the trapezoid rule on the union of both grids.
pub fn marginal_accuracy(q: &GridDensity, reference: &GridDensity) -> Result<f64> {
    let (qa, qb) = (q.grid[0], q.grid[q.grid.len() - 1]);
    let (ra, rb) = (reference.grid[0], reference.grid[reference.grid.len() - 1]);
    if qb < ra || rb < qa {
        return Err(Error::InvalidArgument("density grids do not overlap".into()));
    }
    let mut grid: Vec<f64> = q.grid.iter().chain(&reference.grid).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let diff: Vec<f64> = grid.iter().map(|&x| (q.at(x) - reference.at(x)).abs()).collect();
    Ok((1.0 - 0.5 * trapezoid(&grid, &diff)).clamp(0.0, 1.0))
}

/// Inefficiency relative to importance sampling:
/// `(MSE_M / MSE_IS) × (cost_IS / cost_M)`.
pub fn iris(mse_m: f64, cost_m: f64, mse_is: f64, cost_is: f64) -> Result<f64> {
    if [mse_m, cost_m, mse_is, cost_is].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("IRIS needs positive finite errors and costs".into()));
    }
    Ok(mse_m / mse_is * cost_is / cost_m)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

/// Weighted quantile by inverting the weighted empirical CDF.
fn weighted_quantile(sorted: &[(f64, f64)], prob: f64) -> f64 {
    let mut cum = 0.0;
    for &(x, w) in sorted {
        cum += w;
        if cum >= prob {
            return x;
        }
    }
    sorted[sorted.len() - 1].0
}

/// Minimum effective sample size for density estimation.
pub const MIN_KDE_ESS: f64 = 100.0;
/// Kernel support used in the sums, in bandwidths.
const KERNEL_REACH: f64 = 8.0;
const BINS_PER_BANDWIDTH: f64 = 20.0;
const MAX_KDE_BINS: usize = 1 << 16;

/// Silverman bandwidth `0.9 min(sd, IQR/1.34) ESS^{-1/5}` for one component.
pub fn kde_bandwidth(values: &[f64], weights: &[f64], ess: f64) -> Result<f64> {
    let mean: f64 = values.iter().zip(weights).map(|(x, w)| x * w).sum();
    let var: f64 = values.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let iqr = weighted_quantile(&sorted, 0.75) - weighted_quantile(&sorted, 0.25);
    let sd = var.sqrt();
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::DegenerateWeights("sample has zero spread; no density estimate".into()));
    }
    Ok(0.9 * spread * ess.powf(-0.2))
}

/// Default evaluation grid: `points` nodes over mean ± 6 sd.
pub fn default_grid(mean: f64, sd: f64, points: usize) -> Vec<f64> {
    linspace(mean - 6.0 * sd, mean + 6.0 * sd, points)
}

/// Weighted Gaussian-kernel density estimates of every marginal, evaluated on
/// `grids[j]` for component `j`.
pub fn kde_marginals(sample: &WeightedSample, grids: &[Vec<f64>]) -> Result<Vec<GridDensity>> {
    if grids.len() != sample.dim() {
        return Err(Error::InvalidArgument("need one grid per component".into()));
    }
    let w = sample.normalized_weights()?;
    let ess = sample.ess();
    if ess < MIN_KDE_ESS {
        return Err(Error::DegenerateWeights(format!(
            "effective sample size {ess:.1} is below {MIN_KDE_ESS} for density estimation"
        )));
    }
    (0..sample.dim())
        .map(|j| {
            let values: Vec<f64> = sample.points.column(j).iter().copied().collect();
            let h = kde_bandwidth(&values, &w, ess)?;
            let density = binned_kde(&values, &w, h, &grids[j]);
            GridDensity::new(grids[j].clone(), density)
        })
        .collect()
}

/// Linear binning onto bins anchored at the evaluation grid, so two samples
/// evaluated on the same grid share their discretization.
fn binned_kde(values: &[f64], weights: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let reach = KERNEL_REACH * h;
    let lo = grid[0] - reach;
    let hi = grid[grid.len() - 1] + reach;
    let bins = (((hi - lo) / h * BINS_PER_BANDWIDTH).ceil() as usize + 1).clamp(2, MAX_KDE_BINS);
    let width = (hi - lo) / (bins - 1) as f64;
    let mut mass = vec![0.0; bins];
    for (x, w) in values.iter().zip(weights) {
        if !(lo..=hi).contains(x) {
            continue;
        }
        let pos = (x - lo) / width;
        let k = (pos.floor() as usize).min(bins - 2);
        let t = pos - k as f64;
        mass[k] += w * (1.0 - t);
        mass[k + 1] += w * t;
    }
    grid.iter()
        .map(|&g| {
            let first = ((g - reach - lo) / width).floor().max(0.0) as usize;
            let last = (((g + reach - lo) / width).ceil() as usize).min(bins - 1);
            (first..=last)
                .filter(|&k| mass[k] > 0.0)
                .map(|k| mass[k] * norm_pdf((g - (lo + k as f64 * width)) / h))
                .sum::<f64>()
                / h
        })
        .collect()
}
