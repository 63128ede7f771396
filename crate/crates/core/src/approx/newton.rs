use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{max_abs, max_eigenvalue};
use crate::model::{Derivatives, PosteriorTarget};

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Stop when the sup-norm of the gradient falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; the least-squares fit of `y` on `X` when absent.
    pub init: Option<DVector<f64>>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 100,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub beta: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub log_density: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Objective value after each accepted step, starting with the initial point.
    pub trajectory: Vec<f64>,
}

/// Least-squares fit of `y` on `X`, or zeros if `XᵀX` is singular.
pub fn ols_init(target: &PosteriorTarget) -> DVector<f64> {
    let s = target.signed_design();
    let p = target.dim();
    if s.nrows() < p {
        return DVector::zeros(p);
    }
    // With rows y_i x_i: XᵀX = SᵀS and Xᵀy = Sᵀ1.
    let xtx = s.tr_mul(s);
    let xty = s.row_sum().transpose();
    match xtx.cholesky() {
        Some(chol) => {
            let b = chol.solve(&xty);
            if b.iter().all(|v| v.is_finite()) {
                b
            } else {
                DVector::zeros(p)
            }
        }
        None => DVector::zeros(p),
    }
}

/// Newton-Raphson for a smooth objective with step-halving line search.
///
/// `derivs` returns value, gradient and Hessian; `value` evaluates the
/// objective alone during the line search. When the Hessian is not negative
/// definite, it is shifted by `λ_max + 1e-6` before solving.
pub(crate) fn maximize(
    derivs: impl Fn(&DVector<f64>) -> Derivatives,
    value: impl Fn(&DVector<f64>) -> f64,
    init: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> MapResult {
    let mut beta = init;
    let mut d = derivs(&beta);
    let mut trajectory = vec![d.value];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let gnorm = max_abs(&d.gradient);
        if gnorm <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter || !gnorm.is_finite() {
            break;
        }
        let neg_h = -&d.hessian;
        let step = match neg_h.clone().cholesky() {
            Some(chol) => chol.solve(&d.gradient),
            None => {
                let shift = max_eigenvalue(&d.hessian) + 1e-6;
                let shifted = neg_h + DMatrix::identity(beta.len(), beta.len()) * shift;
                match shifted.cholesky() {
                    Some(chol) => chol.solve(&d.gradient),
                    None => d.gradient.clone(),
                }
            }
        };
        let slack = 64.0 * f64::EPSILON * d.value.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let candidate = &beta + &step * scale;
            let v = value(&candidate);
            if v.is_finite() && v >= d.value - slack {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };
        iterations += 1;
        beta = next;
        d = derivs(&beta);
        trajectory.push(d.value);
    }
    MapResult {
        gradient_norm: max_abs(&d.gradient),
        beta,
        hessian: d.hessian,
        log_density: d.value,
        iterations,
        converged,
        trajectory,
    }
}

/// Posterior mode by Newton-Raphson.
pub fn newton_map(target: &PosteriorTarget, options: &NewtonOptions) -> Result<MapResult> {
    let init = options.init.clone().unwrap_or_else(|| ols_init(target));
    if init.len() != target.dim() || init.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::InvalidArgument("initial point must be finite with p entries".into()));
    }
    if !(options.tol > 0.0) {
        return Err(crate::Error::InvalidArgument("tolerance must be positive".into()));
    }
    let result = maximize(
        |b| target.derivatives(b),
        |b| target.log_density(b),
        init,
        options.tol,
        options.max_iter,
    );
    if !result.converged {
        log::warn!(
            "Newton-Raphson stopped after {} iterations with gradient norm {:.3e}",
            result.iterations,
            result.gradient_norm
        );
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthetic_dataset, Dataset, Link, Prior, PriorKind};
    use approx::assert_relative_eq;

    #[test]
    fn prior_only_target_converges_to_zero_in_one_step() {
        let t = PosteriorTarget::prior_only(Prior::default_for(PriorKind::Gaussian, 3, true), Link::Probit);
        let opts = NewtonOptions {
            init: Some(DVector::from_vec(vec![1.0, -2.0, 3.0])),
            ..Default::default()
        };
        let r = newton_map(&t, &opts).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(max_abs(&r.beta) < 1e-12);
    }

    #[test]
    fn separated_data_have_finite_mode() {
        let data = Dataset::new(
            DVector::from_vec(vec![-1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]),
            vec!["(Intercept)".into(), "x".into()],
            true,
        )
        .unwrap();
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 2, true), Link::Probit).unwrap();
        let r = newton_map(&t, &NewtonOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.beta.iter().all(|v| v.is_finite()));
        assert!(r.beta[1] > 1.0);
    }

    #[test]
    fn line_search_never_decreases_objective() {
        let data = synthetic_dataset(80, &[0.3, 2.0, -1.0, 0.5], Link::Logit, 9);
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Cauchy, 4, true), Link::Logit).unwrap();
        let opts = NewtonOptions {
            init: Some(DVector::from_vec(vec![8.0, -9.0, 7.0, 12.0])),
            ..Default::default()
        };
        let r = newton_map(&t, &opts).unwrap();
        assert!(r.converged);
        for w in r.trajectory.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn zero_and_ols_starts_agree() {
        for seed in 0..50 {
            let link = if seed % 2 == 0 { Link::Probit } else { Link::Logit };
            let data = synthetic_dataset(60, &[0.2, 1.0, -0.8], link, seed);
            let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 3, true), link).unwrap();
            let a = newton_map(&t, &NewtonOptions::default()).unwrap();
            let b = newton_map(
                &t,
                &NewtonOptions {
                    init: Some(DVector::zeros(3)),
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(a.converged && b.converged);
            assert!(max_abs(&(&a.beta - &b.beta)) <= 1e-7);
        }
    }

    #[test]
    fn ols_solves_normal_equations() {
        let data = synthetic_dataset(30, &[0.0, 1.0], Link::Probit, 3);
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Cauchy, 2, true), Link::Probit).unwrap();
        let b = ols_init(&t);
        let resid = &data.y - &data.x * &b;
        let normal = data.x.transpose() * resid;
        assert_relative_eq!(normal.norm(), 0.0, epsilon = 1e-10);
    }
}
