use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::data::Dataset;
use super::link::Link;
use super::prior::Prior;
use crate::error::{Error, Result};

/// Points per work unit in batched evaluations.
const BATCH_CHUNK: usize = 128;

/// Unnormalized log-posterior `log p(β) + Σ log F(y_i βᵀx_i)`.
#[derive(Debug)]
pub struct PosteriorTarget {
    prior: Prior,
    link: Link,
    /// Row `i` is `y_i x_i`.
    signed: DMatrix<f64>,
    column_names: Vec<String>,
    intercept: bool,
    evaluations: AtomicU64,
}

impl Clone for PosteriorTarget {
    fn clone(&self) -> Self {
        PosteriorTarget {
            prior: self.prior.clone(),
            link: self.link,
            signed: self.signed.clone(),
            column_names: self.column_names.clone(),
            intercept: self.intercept,
            evaluations: AtomicU64::new(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl PosteriorTarget {
    pub fn new(data: &Dataset, prior: Prior, link: Link) -> Result<Self> {
        if prior.dim() != data.dim() {
            return Err(Error::InvalidArgument(format!(
                "prior has {} components but design has {} columns",
                prior.dim(),
                data.dim()
            )));
        }
        let mut signed = data.x.clone();
        for (i, mut row) in signed.row_iter_mut().enumerate() {
            row *= data.y[i];
        }
        Ok(PosteriorTarget {
            prior,
            link,
            signed,
            column_names: data.column_names.clone(),
            intercept: data.intercept,
            evaluations: AtomicU64::new(0),
        })
    }

    /// Target with no observations: the posterior is the prior.
    pub fn prior_only(prior: Prior, link: Link) -> Self {
        let p = prior.dim();
        PosteriorTarget {
            prior,
            link,
            signed: DMatrix::zeros(0, p),
            column_names: (0..p).map(|j| format!("x{j}")).collect(),
            intercept: false,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.signed.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.signed.nrows()
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Rows `y_i x_i` of the design.
    pub fn signed_design(&self) -> &DMatrix<f64> {
        &self.signed
    }

    /// Number of log-density evaluations performed so far (all entry points).
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn count(&self, k: usize) {
        self.evaluations.fetch_add(k as u64, Ordering::Relaxed);
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.signed * beta;
        eta.iter().map(|&t| self.link.log_cdf(t)).sum()
    }

    pub fn log_prior(&self, beta: &DVector<f64>) -> f64 {
        self.prior.log_density(beta)
    }

    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        self.count(1);
        self.log_prior(beta) + self.log_likelihood(beta)
    }

    pub fn log_density_and_gradient(&self, beta: &DVector<f64>) -> (f64, DVector<f64>) {
        self.count(1);
        let eta = &self.signed * beta;
        let mut value = self.prior.log_density(beta);
        let mut d1 = DVector::zeros(eta.len());
        for (i, &t) in eta.iter().enumerate() {
            value += self.link.log_cdf(t);
            d1[i] = self.link.d_log_cdf(t);
        }
        let (mut grad, _) = self.prior.log_density_derivatives(beta);
        grad.gemv_tr(1.0, &self.signed, &d1, 1.0);
        (value, grad)
    }

    pub fn derivatives(&self, beta: &DVector<f64>) -> Derivatives {
        self.count(1);
        let eta = &self.signed * beta;
        let mut value = self.prior.log_density(beta);
        let n = eta.len();
        let mut d1 = DVector::zeros(n);
        let mut weighted = self.signed.clone();
        for (i, &t) in eta.iter().enumerate() {
            let (l, a, b) = self.link.log_cdf_derivatives(t);
            value += l;
            d1[i] = a;
            weighted.row_mut(i).scale_mut(b);
        }
        let (mut gradient, prior_h) = self.prior.log_density_derivatives(beta);
        gradient.gemv_tr(1.0, &self.signed, &d1, 1.0);
        let mut hessian = self.signed.tr_mul(&weighted);
        for j in 0..self.dim() {
            hessian[(j, j)] += prior_h[j];
        }
        crate::linalg::symmetrize(&mut hessian);
        Derivatives {
            value,
            gradient,
            hessian,
        }
    }

    /// Log-likelihood for every row of `points` (`N × p`).
    pub fn log_likelihood_batch(&self, points: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(points.ncols(), self.dim());
        let n_points = points.nrows();
        self.count(n_points);
        let starts: Vec<usize> = (0..n_points).step_by(BATCH_CHUNK).collect();
        starts
            .par_iter()
            .map(|&start| {
                let len = BATCH_CHUNK.min(n_points - start);
                let chunk = points.rows(start, len);
                let eta = &self.signed * chunk.transpose();
                eta.column_iter()
                    .map(|col| col.iter().map(|&t| self.link.log_cdf(t)).sum::<f64>())
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }

    /// Unnormalized log-posterior for every row of `points` (`N × p`).
    pub fn log_density_batch(&self, points: &DMatrix<f64>) -> Vec<f64> {
        let ll = self.log_likelihood_batch(points);
        ll.into_iter()
            .enumerate()
            .map(|(n, l)| l + self.prior.log_density(&points.row(n).transpose()))
            .collect()
    }

    /// Same data and link under a different prior.
    pub fn with_prior(&self, prior: Prior) -> Result<PosteriorTarget> {
        if prior.dim() != self.dim() {
            return Err(Error::InvalidArgument("prior dimension does not match target".into()));
        }
        let mut t = self.clone();
        t.prior = prior;
        Ok(t)
    }

    /// Target restricted to the listed columns.
    pub fn restrict(&self, columns: &[usize]) -> PosteriorTarget {
        PosteriorTarget {
            prior: self.prior.restrict(columns),
            link: self.link,
            signed: self.signed.select_columns(columns),
            column_names: columns.iter().map(|&j| self.column_names[j].clone()).collect(),
            intercept: self.intercept && columns.first() == Some(&0),
            evaluations: AtomicU64::new(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::prior::PriorKind;
    use crate::model::synthetic::synthetic_dataset;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn target(link: Link, kind: PriorKind, seed: u64) -> PosteriorTarget {
        let data = synthetic_dataset(40, &[0.5, -1.0, 0.7], link, seed);
        PosteriorTarget::new(&data, Prior::default_for(kind, 3, true), link).unwrap()
    }

    #[test]
    fn zero_coefficients_give_half_probabilities() {
        for link in [Link::Probit, Link::Logit] {
            let t = target(link, PriorKind::Gaussian, 1);
            assert_relative_eq!(
                t.log_likelihood(&DVector::zeros(3)),
                -(t.n_obs() as f64) * LN_2,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn gaussian_probit_hessian_is_negative_definite() {
        let t = target(Link::Probit, PriorKind::Gaussian, 2);
        for beta in [DVector::zeros(3), DVector::from_vec(vec![3.0, -4.0, 9.0])] {
            let h = t.derivatives(&beta).hessian;
            assert!(h.symmetric_eigenvalues().iter().all(|&e| e < 0.0));
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let t = target(Link::Logit, PriorKind::Cauchy, 3);
        let points = DMatrix::from_fn(300, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let batch = t.log_density_batch(&points);
        for n in [0, 127, 128, 299] {
            let b = points.row(n).transpose();
            assert_relative_eq!(batch[n], t.log_density(&b), max_relative = 1e-12);
        }
    }

    #[test]
    fn restriction_keeps_selected_columns() {
        let t = target(Link::Probit, PriorKind::Gaussian, 4);
        let r = t.restrict(&[0, 2]);
        let full = DVector::from_vec(vec![0.2, 0.0, -0.4]);
        let sub = DVector::from_vec(vec![0.2, -0.4]);
        assert_relative_eq!(r.log_likelihood(&sub), t.log_likelihood(&full), max_relative = 1e-14);
    }

    fn fd_check(t: &PosteriorTarget, beta: &DVector<f64>) -> (f64, f64) {
        let d = t.derivatives(beta);
        let h = 1e-5;
        let p = beta.len();
        let mut grad_err = 0.0f64;
        let mut hess_err = 0.0f64;
        for j in 0..p {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (t.log_density(&up) - t.log_density(&down)) / (2.0 * h);
            grad_err = grad_err.max((fd - d.gradient[j]).abs() / d.gradient[j].abs().max(1.0));
            let gu = t.log_density_and_gradient(&up).1;
            let gd = t.log_density_and_gradient(&down).1;
            for k in 0..p {
                let fd = (gu[k] - gd[k]) / (2.0 * h);
                hess_err = hess_err.max((fd - d.hessian[(k, j)]).abs() / d.hessian[(k, j)].abs().max(1.0));
            }
        }
        (grad_err, hess_err)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn derivatives_agree_with_finite_differences(
            seed in 0u64..1000,
            b in prop::collection::vec(-3.0f64..3.0, 3),
            logit in any::<bool>(),
            cauchy in any::<bool>(),
        ) {
            let link = if logit { Link::Logit } else { Link::Probit };
            let kind = if cauchy { PriorKind::Cauchy } else { PriorKind::Gaussian };
            let t = target(link, kind, seed);
            let (g, h) = fd_check(&t, &DVector::from_vec(b));
            prop_assert!(g < 1e-6, "gradient rel err {g}");
            prop_assert!(h < 1e-5, "hessian rel err {h}");
        }

        #[test]
        fn log_likelihood_is_concave(
            seed in 0u64..1000,
            b1 in prop::collection::vec(-4.0f64..4.0, 3),
            b2 in prop::collection::vec(-4.0f64..4.0, 3),
            lambda in 0.01f64..0.99,
            logit in any::<bool>(),
        ) {
            let link = if logit { Link::Logit } else { Link::Probit };
            let t = target(link, PriorKind::Gaussian, seed);
            let (b1, b2) = (DVector::from_vec(b1), DVector::from_vec(b2));
            let mid = &b1 * lambda + &b2 * (1.0 - lambda);
            let lhs = t.log_likelihood(&mid);
            let rhs = lambda * t.log_likelihood(&b1) + (1.0 - lambda) * t.log_likelihood(&b2);
            prop_assert!(lhs >= rhs - 1e-12);
        }

        #[test]
        fn flipping_labels_and_coefficients_is_a_symmetry(
            seed in 0u64..1000,
            b in prop::collection::vec(-3.0f64..3.0, 3),
            logit in any::<bool>(),
        ) {
            let link = if logit { Link::Logit } else { Link::Probit };
            let data = synthetic_dataset(30, &[0.1, 1.0, -0.5], link, seed);
            let mut flipped = data.clone();
            flipped.y = -flipped.y.clone();
            let prior = Prior::default_for(PriorKind::Gaussian, 3, true);
            let t = PosteriorTarget::new(&data, prior.clone(), link).unwrap();
            let tf = PosteriorTarget::new(&flipped, prior, link).unwrap();
            let beta = DVector::from_vec(b);
            let a = t.log_likelihood(&beta);
            let c = tf.log_likelihood(&-beta);
            prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
