use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map};

use super::trace::ChainTrace;
use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::PosteriorTarget;
use crate::rng::{substream, tag};

/// Energy change beyond which a trajectory counts as divergent.
const DIVERGENCE: f64 = 1000.0;

/// Position, momentum and cached energy terms.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub beta: DVector<f64>,
    pub momentum: DVector<f64>,
    /// `E(β) = −log π(β)`.
    pub potential: f64,
    /// `∇E(β)`.
    pub gradient: DVector<f64>,
    /// `E(β) + ½ αᵀ M⁻¹ α`.
    pub hamiltonian: f64,
    /// Set once the potential or its gradient stops being finite.
    pub divergent: bool,
}

impl PhasePoint {
    pub fn new(
        beta: DVector<f64>,
        momentum: DVector<f64>,
        potential: &impl Fn(&DVector<f64>) -> (f64, DVector<f64>),
        inv_mass: &DMatrix<f64>,
    ) -> Self {
        let (e, g) = potential(&beta);
        let mut pp = PhasePoint {
            beta,
            momentum,
            potential: e,
            gradient: g,
            hamiltonian: 0.0,
            divergent: false,
        };
        pp.refresh_energy(inv_mass);
        pp
    }

    pub fn kinetic(&self, inv_mass: &DMatrix<f64>) -> f64 {
        0.5 * self.momentum.dot(&(inv_mass * &self.momentum))
    }

    fn refresh_energy(&mut self, inv_mass: &DMatrix<f64>) {
        self.hamiltonian = self.potential + self.kinetic(inv_mass);
        self.divergent |=
            !(self.hamiltonian.is_finite() && self.gradient.iter().all(|g| g.is_finite()));
    }
}

/// One leapfrog step: half kick, drift, half kick.
pub fn leapfrog(
    pp: &PhasePoint,
    potential: &impl Fn(&DVector<f64>) -> (f64, DVector<f64>),
    eps: f64,
    inv_mass: &DMatrix<f64>,
) -> PhasePoint {
    let half = &pp.momentum - &pp.gradient * (0.5 * eps);
    let beta = &pp.beta + inv_mass * &half * eps;
    let (e, g) = potential(&beta);
    let momentum = half - &g * (0.5 * eps);
    let mut next = PhasePoint {
        beta,
        momentum,
        potential: e,
        gradient: g,
        hamiltonian: 0.0,
        divergent: pp.divergent,
    };
    next.refresh_energy(inv_mass);
    next
}

#[derive(Debug, Clone)]
pub struct HmcOptions {
    pub iterations: usize,
    /// Defaults to a tenth of the iterations.
    pub burn_in: Option<usize>,
    /// Defaults to `0.1 p^{-1/4}`.
    pub step_size: Option<f64>,
    /// Integration time `εL`.
    pub trajectory_length: f64,
    pub target_acceptance: f64,
    /// Adaptation gains decay as `t^{-κ}`.
    pub kappa: f64,
    /// Defaults to the mean of the calibrating Gaussian.
    pub init: Option<DVector<f64>>,
}

impl HmcOptions {
    pub fn new(iterations: usize) -> Self {
        HmcOptions {
            iterations,
            burn_in: None,
            step_size: None,
            trajectory_length: 1.0,
            target_acceptance: 0.65,
            kappa: 0.75,
            init: None,
        }
    }
}

/// Hamiltonian Monte Carlo with mass matrix `M = Σ_q⁻¹` and step size tuned
/// during burn-in by vanishing adaptation on log ε.
pub fn hmc(target: &PosteriorTarget, q: &GaussianApprox, options: &HmcOptions, seed: u64) -> Result<ChainTrace> {
    let p = target.dim();
    if q.dim() != p {
        return Err(Error::InvalidArgument("calibration dimension does not match target".into()));
    }
    if options.iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    if !(options.kappa > 0.5 && options.kappa <= 1.0) {
        return Err(Error::InvalidArgument("adaptation exponent must lie in (1/2, 1]".into()));
    }
    let burn_in = options.burn_in.unwrap_or(options.iterations / 10).min(options.iterations - 1);
    let kept = options.iterations - burn_in;
    let inv_mass = q.covariance().clone();
    let mass_factor = cholesky(q.precision(), "HMC mass matrix")?.l();
    let potential = |b: &DVector<f64>| {
        let (lp, g) = target.log_density_and_gradient(b);
        (-lp, -g)
    };
    let mut rng = substream(seed, &[tag::HMC]);

    let eps0 = options.step_size.unwrap_or(0.1 * (p as f64).powf(-0.25));
    let mut log_eps = eps0.ln();
    let mut log_eps_sum = 0.0;
    let mut log_eps_count = 0usize;
    let mut frozen = burn_in == 0;
    let mut history = Vec::new();
    let history_stride = (burn_in / 500).max(1);

    let beta0 = options.init.clone().unwrap_or_else(|| q.mean().clone());
    let mut current = PhasePoint::new(beta0, DVector::zeros(p), &potential, &inv_mass);
    if current.divergent {
        return Err(Error::Numerical("chain started at a point of zero posterior density".into()));
    }
    let mut states = DMatrix::zeros(kept, p);
    let mut log_post = Vec::with_capacity(kept);
    let mut accept_sum = 0.0;
    let mut accepted = 0usize;
    let mut divergences = 0usize;

    for t in 0..options.iterations {
        if t == burn_in && !frozen {
            log_eps = log_eps_sum / log_eps_count.max(1) as f64;
            frozen = true;
        }
        let eps = log_eps.exp();
        let steps = ((options.trajectory_length / eps).round() as usize).max(1);

        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        current.momentum = &mass_factor * z;
        current.refresh_energy(&inv_mass);
        let mut pp = current.clone();
        for _ in 0..steps {
            pp = leapfrog(&pp, &potential, eps, &inv_mass);
            if pp.divergent {
                break;
            }
        }
        let delta = pp.hamiltonian - current.hamiltonian;
        let diverged = pp.divergent || delta.abs() > DIVERGENCE;
        let prob = if diverged { 0.0 } else { (-delta).exp().min(1.0) };
        if diverged && t >= burn_in {
            divergences += 1;
        }
        let u: f64 = rng.random();
        let accept = !diverged && u < prob;
        if accept {
            current = pp;
        }

        if t < burn_in {
            let gain = ((t + 1) as f64).powf(-options.kappa);
            log_eps += gain * (prob - options.target_acceptance);
            if t >= burn_in / 2 {
                log_eps_sum += log_eps;
                log_eps_count += 1;
            }
            if t % history_stride == 0 {
                history.push(log_eps.exp());
            }
        } else {
            accept_sum += prob;
            accepted += accept as usize;
            states.set_row(t - burn_in, &current.beta.transpose());
            log_post.push(-current.potential);
        }
    }

    let eps = log_eps.exp();
    let mut tuning = Map::new();
    tuning.insert("sampler".into(), json!("hmc"));
    tuning.insert("step_size".into(), json!(eps));
    tuning.insert("leapfrog_steps".into(), json!(((options.trajectory_length / eps).round() as usize).max(1)));
    tuning.insert("initial_step_size".into(), json!(eps0));
    tuning.insert("kappa".into(), json!(options.kappa));
    tuning.insert("mean_acceptance_probability".into(), json!(accept_sum / kept as f64));
    tuning.insert("divergences".into(), json!(divergences));
    tuning.insert("step_size_history".into(), json!(history));
    Ok(ChainTrace {
        states,
        log_posterior: log_post,
        acceptance_rate: accepted as f64 / kept as f64,
        burn_in,
        tuning,
    })
}
