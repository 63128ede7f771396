use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map};

use super::trace::ChainTrace;
use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::model::PosteriorTarget;
use crate::rng::{substream, tag};

#[derive(Debug, Clone)]
pub struct RwmhOptions {
    /// Total iterations including burn-in.
    pub iterations: usize,
    /// Proposal covariance is `(λ²/p) Σ_q`.
    pub lambda: f64,
    /// Defaults to a tenth of the iterations.
    pub burn_in: Option<usize>,
    /// Defaults to the mean of the calibrating Gaussian.
    pub init: Option<DVector<f64>>,
}

impl RwmhOptions {
    pub fn new(iterations: usize) -> Self {
        RwmhOptions {
            iterations,
            lambda: 2.38,
            burn_in: None,
            init: None,
        }
    }
}

/// Random-walk Metropolis with a Gaussian proposal shaped like `q`.
pub fn rwmh(target: &PosteriorTarget, q: &GaussianApprox, options: &RwmhOptions, seed: u64) -> Result<ChainTrace> {
    let p = target.dim();
    if q.dim() != p {
        return Err(Error::InvalidArgument("calibration dimension does not match target".into()));
    }
    if options.iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    let burn_in = options.burn_in.unwrap_or(options.iterations / 10).min(options.iterations - 1);
    let kept = options.iterations - burn_in;
    let step = q.cov_cholesky() * (options.lambda / (p as f64).sqrt());
    let mut rng = substream(seed, &[tag::RWMH]);

    let mut beta = options.init.clone().unwrap_or_else(|| q.mean().clone());
    let mut log_post = target.log_density(&beta);
    if !log_post.is_finite() {
        return Err(Error::Numerical("chain started at a point of zero posterior density".into()));
    }
    let mut states = DMatrix::zeros(kept, p);
    let mut trace_lp = Vec::with_capacity(kept);
    let mut accepted = 0usize;
    for t in 0..options.iterations {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = &beta + &step * z;
        let lp = target.log_density(&proposal);
        let u: f64 = rng.random();
        let accept = lp.is_finite() && u.ln() < lp - log_post;
        if accept {
            beta = proposal;
            log_post = lp;
        }
        if t >= burn_in {
            accepted += accept as usize;
            states.set_row(t - burn_in, &beta.transpose());
            trace_lp.push(log_post);
        }
    }

    let mut tuning = Map::new();
    tuning.insert("sampler".into(), json!("rwmh"));
    tuning.insert("lambda".into(), json!(options.lambda));
    tuning.insert("proposal_scale".into(), json!(options.lambda.powi(2) / p as f64));
    tuning.insert("iterations".into(), json!(options.iterations));
    Ok(ChainTrace {
        states,
        log_posterior: trace_lp,
        acceptance_rate: accepted as f64 / kept as f64,
        burn_in,
        tuning,
    })
}
