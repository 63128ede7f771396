use rand::Rng;

use super::evidence::{selectable, EvidenceMethod, ModelIndicator};
use super::nested::NestedLogisticProposal;
use super::smc::EvidenceEngine;
use crate::error::{Error, Result};
use crate::model::PosteriorTarget;
use crate::rng::{substream, tag};

/// Output of the single-flip baseline sampler.
#[derive(Debug, Clone)]
pub struct GammaGibbsResult {
    pub inclusion: Vec<f64>,
    pub evaluations: u64,
    pub acceptance_rate: f64,
    pub iterations: usize,
}

/// Metropolized Gibbs over `γ`: each update proposes flipping one bit
/// (cycling through the covariates) and accepts with the pseudo-marginal
/// ratio. Runs until `budget` evidence evaluations have been spent; the
/// first tenth of the updates is discarded.
pub fn gamma_gibbs(target: &PosteriorTarget, method: EvidenceMethod, budget: u64, seed: u64) -> Result<GammaGibbsResult> {
    let p = selectable(target);
    if p == 0 {
        return Err(Error::InvalidArgument("no covariates to select".into()));
    }
    if budget < 2 {
        return Err(Error::InvalidArgument("budget must allow at least two evaluations".into()));
    }
    let engine = EvidenceEngine::new(target, method, seed);
    let mut rng = substream(seed, &[tag::VARSEL_GIBBS]);
    let mut gamma = NestedLogisticProposal::uniform(p).sample(&mut rng);
    let mut le = engine.evaluate(&gamma, &[tag::VARSEL_GIBBS, 0])?;
    let updates = (budget - 1) as usize;
    let burn_in = updates / 10;
    let mut counts = vec![0usize; p];
    let mut kept = 0;
    let mut accepted = 0;
    for t in 0..updates {
        let j = t % p;
        let mut cand: ModelIndicator = gamma.clone();
        cand.0[j] = !cand.0[j];
        let cand_le = engine.evaluate(&cand, &[tag::VARSEL_GIBBS, t as u64 + 1])?;
        let u: f64 = rng.random();
        if u.ln() < cand_le - le {
            gamma = cand;
            le = cand_le;
            accepted += 1;
        }
        if t >= burn_in {
            kept += 1;
            for (c, b) in counts.iter_mut().zip(&gamma.0) {
                *c += usize::from(*b);
            }
        }
    }
    Ok(GammaGibbsResult {
        inclusion: counts.iter().map(|c| *c as f64 / kept.max(1) as f64).collect(),
        evaluations: engine.evaluations(),
        acceptance_rate: accepted as f64 / updates.max(1) as f64,
        iterations: updates,
    })
}
