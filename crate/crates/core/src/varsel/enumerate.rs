use rayon::prelude::*;

use super::evidence::{model_evidence, selectable, EvidenceMethod, ModelIndicator};
use crate::error::{Error, Result};
use crate::model::PosteriorTarget;
use crate::rng::{mix, tag};
use crate::special::normalize_log_weights;

/// Largest number of selectable covariates accepted for enumeration.
pub const MAX_ENUMERATION: usize = 20;

/// Posterior over all `2^p` models.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub models: Vec<ModelIndicator>,
    pub log_evidence: Vec<f64>,
    pub posterior: Vec<f64>,
    pub inclusion: Vec<f64>,
}

impl Enumeration {
    /// The `k` most probable models, most probable first.
    pub fn top(&self, k: usize) -> Vec<(ModelIndicator, f64)> {
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        order.sort_by(|&a, &b| self.posterior[b].total_cmp(&self.posterior[a]).then(a.cmp(&b)));
        order.into_iter().take(k).map(|i| (self.models[i].clone(), self.posterior[i])).collect()
    }
}

/// Exact enumeration of the model space with the chosen evidence method.
pub fn enumerate_varsel(target: &PosteriorTarget, method: EvidenceMethod, seed: u64) -> Result<Enumeration> {
    let p = selectable(target);
    if p > MAX_ENUMERATION {
        return Err(Error::Config(format!(
            "{p} covariates give 2^{p} models; enumeration is capped at {MAX_ENUMERATION}, use the SMC sampler instead"
        )));
    }
    let models: Vec<ModelIndicator> = (0..1u64 << p).map(|i| ModelIndicator::from_index(i, p)).collect();
    let log_evidence = models
        .par_iter()
        .enumerate()
        .map(|(i, g)| model_evidence(g, target, method, mix(seed, &[tag::VARSEL_ENUM, i as u64])))
        .collect::<Result<Vec<f64>>>()?;
    // the uniform model prior cancels on normalization
    let posterior = normalize_log_weights(&log_evidence);
    let inclusion = (0..p)
        .map(|j| models.iter().zip(&posterior).filter(|(g, _)| g.0[j]).fold(0.0, |acc, (_, w)| acc + w))
        .collect();
    Ok(Enumeration {
        models,
        log_evidence,
        posterior,
        inclusion,
    })
}
