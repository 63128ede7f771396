use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::gaussian::GaussianApprox;
use super::newton::{maximize, newton_map, ols_init, NewtonOptions};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, spd_inverse};
use crate::model::{Derivatives, PosteriorTarget, Prior, PriorKind};
use crate::special::{linspace, trapezoid, LN_2PI};

/// Laplace approximation at the posterior mode, with the Laplace estimate
/// of the log-evidence.
pub fn laplace(target: &PosteriorTarget) -> Result<GaussianApprox> {
    laplace_with(target, &NewtonOptions::default())
}

pub fn laplace_with(target: &PosteriorTarget, options: &NewtonOptions) -> Result<GaussianApprox> {
    let map = newton_map(target, options)?;
    if !map.converged {
        return Err(Error::Convergence(format!(
            "posterior mode search stopped at gradient norm {:.3e}",
            map.gradient_norm
        )));
    }
    let q = -&map.hessian;
    let chol = cholesky(&q, "negative Hessian at the mode")?;
    let p = target.dim() as f64;
    let log_evidence = map.log_density + 0.5 * p * LN_2PI - 0.5 * log_det(&chol);
    let approx = GaussianApprox::from_natural(&q * &map.beta, q, Some(log_evidence))?;
    Ok(approx)
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub points: usize,
    /// Half-width of the grid in Laplace standard deviations.
    pub span: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 64, span: 5.0 }
    }
}

/// Density of one component evaluated on an ordered grid.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalCurve {
    pub component: usize,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Grid points dropped because the conditional optimization failed.
    pub dropped: usize,
}

impl MarginalCurve {
    /// Normalize `exp(log_density)` on the grid by the trapezoid rule.
    pub fn from_log_density(component: usize, grid: Vec<f64>, log_density: &[f64], dropped: usize) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidArgument("marginal grid needs at least two points".into()));
        }
        let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut density: Vec<f64> = log_density.iter().map(|v| (v - max).exp()).collect();
        let z = trapezoid(&grid, &density);
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Numerical("marginal density does not normalize".into()));
        }
        density.iter_mut().for_each(|d| *d /= z);
        Ok(MarginalCurve {
            component,
            grid,
            density,
            dropped,
        })
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

fn insert(rest: &DVector<f64>, j: usize, value: f64) -> DVector<f64> {
    let p = rest.len() + 1;
    DVector::from_fn(p, |k, _| match k.cmp(&j) {
        std::cmp::Ordering::Less => rest[k],
        std::cmp::Ordering::Equal => value,
        std::cmp::Ordering::Greater => rest[k - 1],
    })
}

fn drop_index(v: &DVector<f64>, j: usize) -> DVector<f64> {
    v.clone().remove_row(j)
}

/// Marginal of component `j` by Laplace-approximating the conditional of
/// the other components at each grid point.
pub fn improved_laplace_marginal(target: &PosteriorTarget, j: usize, grid: GridSpec) -> Result<MarginalCurve> {
    let base = laplace(target)?;
    improved_laplace_marginal_from(target, &base, j, grid)
}

pub fn improved_laplace_marginal_from(
    target: &PosteriorTarget,
    base: &GaussianApprox,
    j: usize,
    grid: GridSpec,
) -> Result<MarginalCurve> {
    let p = target.dim();
    if j >= p {
        return Err(Error::InvalidArgument(format!("component {j} out of range")));
    }
    if grid.points < 2 {
        return Err(Error::InvalidArgument("marginal grid needs at least two points".into()));
    }
    let centre = base.mean()[j];
    let sd = base.sd(j);
    let xs = linspace(centre - grid.span * sd, centre + grid.span * sd, grid.points);

    let mut log_q: Vec<Option<f64>> = vec![None; xs.len()];
    if p == 1 {
        for (k, &v) in xs.iter().enumerate() {
            log_q[k] = Some(target.log_density(&DVector::from_element(1, v)));
        }
    } else {
        let start = xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - centre).abs().total_cmp(&(b.1 - centre).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let rest0 = drop_index(base.mean(), j);
        let outward: [Vec<usize>; 2] = [(start..xs.len()).collect(), (0..start).rev().collect()];
        for order in outward {
            let mut warm = rest0.clone();
            for k in order {
                let v = xs[k];
                let result = maximize(
                    |rest| {
                        let d = target.derivatives(&insert(rest, j, v));
                        Derivatives {
                            value: d.value,
                            gradient: drop_index(&d.gradient, j),
                            hessian: d.hessian.clone().remove_row(j).remove_column(j),
                        }
                    },
                    |rest| target.log_density(&insert(rest, j, v)),
                    warm.clone(),
                    1e-8,
                    100,
                );
                if !result.converged {
                    log::warn!("conditional mode search failed at grid point {v:.4} of component {j}");
                    continue;
                }
                match cholesky(&(-&result.hessian), "conditional negative Hessian") {
                    Ok(chol) => {
                        log_q[k] = Some(result.log_density - 0.5 * log_det(&chol));
                        warm = result.beta;
                    }
                    Err(_) => log::warn!("conditional Hessian not definite at grid point {v:.4}"),
                }
            }
        }
    }

    let dropped = log_q.iter().filter(|v| v.is_none()).count();
    if dropped * 5 > xs.len() {
        return Err(Error::Numerical(format!(
            "{dropped} of {} grid points failed for component {j}",
            xs.len()
        )));
    }
    let (kept_x, kept_l): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(&log_q)
        .filter_map(|(x, l)| l.map(|l| (*x, l)))
        .unzip();
    MarginalCurve::from_log_density(j, kept_x, &kept_l, dropped)
}

#[derive(Debug, Clone)]
pub struct LaplaceEmOptions {
    /// Relative change in every prior variance below which EM stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LaplaceEmOptions {
    fn default() -> Self {
        LaplaceEmOptions {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceEmResult {
    pub approx: GaussianApprox,
    /// Fitted prior variances `σ_j²`.
    pub variances: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const STUDENT_DOF: f64 = 1.0;

/// Laplace approximation and posterior covariance at `beta` for the
/// Gaussian-prior model with the given prior variances, after one Newton step.
fn e_step(target: &PosteriorTarget, beta: &DVector<f64>, variances: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let gaussian = target.with_prior(Prior::gaussian_with_sd(&sds)?)?;
    let d = gaussian.derivatives(beta);
    let chol = cholesky(&(-&d.hessian), "negative Hessian in E-step")?;
    let next = beta + chol.solve(&d.gradient);
    let (cov, _) = spd_inverse(&(-gaussian.derivatives(&next).hessian), "negative Hessian in E-step")?;
    Ok((next, cov))
}

fn m_step(beta: &DVector<f64>, cov: &DMatrix<f64>, scales_sq: &[f64]) -> Vec<f64> {
    scales_sq
        .iter()
        .enumerate()
        .map(|(j, s)| (STUDENT_DOF * s + beta[j] * beta[j] + cov[(j, j)]) / (STUDENT_DOF + 1.0))
        .collect()
}

/// EM over the prior variances of the Cauchy prior written as a scale
/// mixture of normals, with a single Newton step as the E-step.
pub fn laplace_em(target: &PosteriorTarget, options: &LaplaceEmOptions) -> Result<LaplaceEmResult> {
    if target.prior().kind != PriorKind::Cauchy {
        return Err(Error::InvalidArgument("Laplace-EM requires the Cauchy prior".into()));
    }
    let scales_sq: Vec<f64> = target.prior().scales.iter().map(|s| s * s).collect();
    let mut variances = scales_sq.clone();
    let mut beta = ols_init(target);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        let (next, cov) = e_step(target, &beta, &variances)?;
        let updated = m_step(&next, &cov, &scales_sq);
        iterations += 1;
        let change = updated
            .iter()
            .zip(&variances)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        beta = next;
        variances = updated;
        if change < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Laplace-EM reached {} iterations without converging", options.max_iter);
    }
    let (mean, cov) = e_step(target, &beta, &variances)?;
    Ok(LaplaceEmResult {
        approx: GaussianApprox::from_moments(mean, cov, None)?,
        variances,
        iterations,
        converged,
    })
}

/// One further E/M cycle from a Laplace-EM solution; returns the updated
/// variances (used to check the fixed point).
pub fn laplace_em_step(target: &PosteriorTarget, result: &LaplaceEmResult) -> Result<Vec<f64>> {
    let scales_sq: Vec<f64> = target.prior().scales.iter().map(|s| s * s).collect();
    let (next, cov) = e_step(target, result.approx.mean(), &result.variances)?;
    Ok(m_step(&next, &cov, &scales_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthetic_dataset, Link};
    use approx::assert_relative_eq;

    #[test]
    fn laplace_on_prior_only_target_returns_prior() {
        let prior = Prior::default_for(PriorKind::Gaussian, 3, true);
        let t = PosteriorTarget::prior_only(prior.clone(), Link::Probit);
        let g = laplace(&t).unwrap();
        assert_relative_eq!(g.log_evidence.unwrap(), 0.0, epsilon = 1e-10);
        for j in 0..3 {
            assert_relative_eq!(g.mean()[j], 0.0, epsilon = 1e-12);
            assert_relative_eq!(g.sd(j), prior.gaussian_sd(j), max_relative = 1e-12);
        }
    }

    #[test]
    fn improved_laplace_on_gaussian_target_is_exact() {
        let prior = Prior::gaussian_with_sd(&[1.5, 0.7]).unwrap();
        let t = PosteriorTarget::prior_only(prior, Link::Logit);
        let curve = improved_laplace_marginal(&t, 1, GridSpec::default()).unwrap();
        assert_eq!(curve.dropped, 0);
        let sd = 0.7;
        let mut worst = 0.0f64;
        for (x, d) in curve.grid.iter().zip(&curve.density) {
            let exact = (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            worst = worst.max((d - exact).abs());
        }
        // The trapezoid normalization on ±5 sd with 64 points is accurate to ~1e-7.
        assert!(worst < 1e-6, "{worst}");
        assert_relative_eq!(curve.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_point_grid_is_rejected() {
        let t = PosteriorTarget::prior_only(Prior::gaussian_with_sd(&[1.0]).unwrap(), Link::Logit);
        let err = improved_laplace_marginal(&t, 0, GridSpec { points: 1, span: 5.0 }).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn laplace_em_requires_cauchy() {
        let data = synthetic_dataset(20, &[0.0, 1.0], Link::Logit, 1);
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 2, true), Link::Logit).unwrap();
        assert!(laplace_em(&t, &LaplaceEmOptions::default()).is_err());
    }

    #[test]
    fn laplace_em_fixed_point() {
        let data = synthetic_dataset(150, &[0.4, 1.5, -0.5, 0.0], Link::Logit, 5);
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Cauchy, 4, true), Link::Logit).unwrap();
        let opts = LaplaceEmOptions::default();
        let r = laplace_em(&t, &opts).unwrap();
        assert!(r.converged);
        let again = laplace_em_step(&t, &r).unwrap();
        for (a, b) in again.iter().zip(&r.variances) {
            assert!(((a - b) / b).abs() < opts.tol, "{a} vs {b}");
        }
    }
}
