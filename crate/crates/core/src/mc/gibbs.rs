use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde_json::{json, Map};

use super::trace::ChainTrace;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{Link, PosteriorTarget, PriorKind};
use crate::rng::{substream, tag, SubRng};
use crate::special::{norm_cdf, norm_ppf};

/// Degrees of freedom of the Student prior written as a scale mixture (Cauchy).
const NU: f64 = 1.0;

/// Draw from `N(0,1)` conditioned on `x > a`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x > a {
                return x;
            }
        }
    } else if a <= 6.0 {
        loop {
            let u: f64 = rng.random();
            let x = -norm_ppf(u * norm_cdf(-a));
            if x > a && x.is_finite() {
                return x;
            }
        }
    } else {
        // exponential proposal with the optimal rate for the tail
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        let exp = Exp::new(alpha).unwrap();
        loop {
            let x = a + exp.sample(rng);
            let u: f64 = rng.random();
            if u.ln() < -0.5 * (x - alpha).powi(2) {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GibbsOptions {
    pub iterations: usize,
    /// Defaults to a tenth of the iterations.
    pub burn_in: Option<usize>,
    /// Defaults to zero.
    pub init: Option<DVector<f64>>,
}

impl GibbsOptions {
    pub fn new(iterations: usize) -> Self {
        GibbsOptions {
            iterations,
            burn_in: None,
            init: None,
        }
    }
}

/// Current values of all blocks of the sampler.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub beta: DVector<f64>,
    /// Signed latent utilities `w_i = y_i z_i`; all positive.
    pub w: DVector<f64>,
    /// Precision multipliers of the Cauchy prior; absent for a Gaussian prior.
    pub s: Option<DVector<f64>>,
}

/// Probit data-augmentation sampler.
///
/// Works on `w_i = y_i z_i`, which given `β` is `N(y_i x_iᵀβ, 1)` truncated to
/// `(0, ∞)`; given `w` the coefficients are a Bayesian linear regression.
pub struct GibbsSampler<'a> {
    target: &'a PosteriorTarget,
    gram: DMatrix<f64>,
    fixed: Option<Cholesky<f64, Dyn>>,
    state: GibbsState,
    rng: SubRng,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(target: &'a PosteriorTarget, init: Option<DVector<f64>>, seed: u64) -> Result<Self> {
        if target.link() != Link::Probit {
            return Err(Error::Unsupported(format!(
                "Gibbs sampling is only available for the probit link, not {}",
                target.link()
            )));
        }
        let p = target.dim();
        let s_mat = target.signed_design();
        let gram = s_mat.transpose() * s_mat;
        let prior = target.prior();
        let fixed = match prior.kind {
            PriorKind::Gaussian => {
                let mut q = gram.clone();
                for j in 0..p {
                    q[(j, j)] += prior.gaussian_sd(j).powi(-2);
                }
                Some(cholesky(&q, "Gibbs posterior precision")?)
            }
            PriorKind::Cauchy => None,
        };
        let beta = init.unwrap_or_else(|| DVector::zeros(p));
        if beta.len() != p {
            return Err(Error::InvalidArgument("initial point has the wrong dimension".into()));
        }
        let s = (prior.kind == PriorKind::Cauchy).then(|| DVector::from_element(p, 1.0));
        let state = GibbsState {
            w: s_mat * &beta,
            beta,
            s,
        };
        let mut sampler = GibbsSampler {
            target,
            gram,
            fixed,
            state,
            rng: substream(seed, &[tag::GIBBS]),
        };
        sampler.update_latents();
        Ok(sampler)
    }

    pub fn state(&self) -> &GibbsState {
        &self.state
    }

    /// Smallest `y_i z_i` in the current state.
    pub fn min_margin(&self) -> f64 {
        self.state.w.min()
    }

    /// Mean and precision factor of `β | w, s`.
    pub fn beta_conditional(&self, w: &DVector<f64>, s: Option<&DVector<f64>>) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
        let chol = match (&self.fixed, s) {
            (Some(c), _) => c.clone(),
            (None, Some(s)) => {
                let prior = self.target.prior();
                let mut q = self.gram.clone();
                for j in 0..q.nrows() {
                    q[(j, j)] += s[j] / (NU * prior.scales[j].powi(2));
                }
                cholesky(&q, "Gibbs posterior precision")?
            }
            (None, None) => return Err(Error::InvalidArgument("scale latents required for the Cauchy prior".into())),
        };
        let rhs = self.target.signed_design().transpose() * w;
        Ok((chol.solve(&rhs), chol))
    }

    fn update_latents(&mut self) {
        let mu = self.target.signed_design() * &self.state.beta;
        for i in 0..mu.len() {
            let w = mu[i] + sample_truncated_normal(-mu[i], &mut self.rng);
            // guard against w rounding to zero when μ is hugely negative
            self.state.w[i] = w.max(f64::MIN_POSITIVE);
        }
    }

    fn update_scales(&mut self) {
        if let Some(s) = self.state.s.as_mut() {
            let prior = self.target.prior();
            for j in 0..s.len() {
                let rate = 0.5 * (1.0 + self.state.beta[j].powi(2) / (NU * prior.scales[j].powi(2)));
                let g = Gamma::new(0.5 * (NU + 1.0), 1.0 / rate).unwrap();
                s[j] = g.sample(&mut self.rng).max(f64::MIN_POSITIVE);
            }
        }
    }

    fn update_beta(&mut self) -> Result<()> {
        let (mean, chol) = self.beta_conditional(&self.state.w, self.state.s.as_ref())?;
        let e = DVector::from_fn(mean.len(), |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let dev = chol.l().transpose().solve_upper_triangular(&e).expect("triangular factor");
        self.state.beta = mean + dev;
        Ok(())
    }

    /// One full sweep: latents, scale latents (Cauchy), coefficients.
    pub fn step(&mut self) -> Result<&GibbsState> {
        self.update_latents();
        self.update_scales();
        self.update_beta()?;
        Ok(&self.state)
    }
}

/// Probit Gibbs sampler under a Gaussian or Cauchy prior.
pub fn gibbs_probit(target: &PosteriorTarget, options: &GibbsOptions, seed: u64) -> Result<ChainTrace> {
    if options.iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    let mut sampler = GibbsSampler::new(target, options.init.clone(), seed)?;
    let p = target.dim();
    let burn_in = options.burn_in.unwrap_or(options.iterations / 10).min(options.iterations - 1);
    let kept = options.iterations - burn_in;
    let mut states = DMatrix::zeros(kept, p);
    let mut log_post = Vec::with_capacity(kept);
    let mut min_margin = f64::INFINITY;
    for t in 0..options.iterations {
        sampler.step()?;
        min_margin = min_margin.min(sampler.min_margin());
        if t >= burn_in {
            let beta = &sampler.state().beta;
            states.set_row(t - burn_in, &beta.transpose());
            log_post.push(target.log_density(beta));
        }
    }
    let mut tuning = Map::new();
    tuning.insert("sampler".into(), json!("gibbs"));
    tuning.insert("prior".into(), json!(target.prior().kind.to_string()));
    tuning.insert("iterations".into(), json!(options.iterations));
    tuning.insert("min_latent_margin".into(), json!(min_margin));
    Ok(ChainTrace {
        states,
        log_posterior: log_post,
        acceptance_rate: 1.0,
        burn_in,
        tuning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_pdf;

    #[test]
    fn truncated_normal_moments_in_every_regime() {
        let mut rng = substream(1, &[99]);
        for &a in &[-3.0, -0.5, 0.0, 1.5, 5.5, 6.5, 12.0, 40.0] {
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_truncated_normal(a, &mut rng)).collect();
            assert!(draws.iter().all(|&x| x > a), "bound {a}");
            let mean = draws.iter().sum::<f64>() / n as f64;
            // E[X | X > a] = φ(a) / Φ(-a), via the Mills ratio in the tail
            let exact = if a > 5.0 { crate::special::inv_mills(-a) } else { norm_pdf(a) / norm_cdf(-a) };
            let var = 1.0 + a * exact - exact * exact;
            let se = (var / n as f64).sqrt();
            assert!((mean - exact).abs() < 4.0 * se + 1e-12, "bound {a}: {mean} vs {exact}");
        }
    }
}
