use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evidence::{model_evidence, selectable, EvidenceMethod, ModelIndicator};
use super::nested::{fit_nested_logistic, NestedLogisticProposal};
use crate::error::{Error, Result};
use crate::model::PosteriorTarget;
use crate::rng::{mix, substream, tag};
use crate::smc::{incremental_log_weights, next_temperature, systematic_resample, StageRecord, TemperatureStep};
use crate::special::{efficiency_factor, log_mean_exp, normalize_log_weights};

/// One fresh evidence computation, tied to the proposal that required it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub stage: usize,
    pub particle: usize,
    /// Move index within the stage; `None` for the initial draw.
    pub step: Option<usize>,
}

/// Evidence evaluations with bookkeeping. Deterministic methods are memoized
/// by model; noisy ones are always recomputed, so a particle's estimate only
/// changes when it accepts a new proposal.
pub struct EvidenceEngine<'a> {
    target: &'a PosteriorTarget,
    method: EvidenceMethod,
    seed: u64,
    evaluations: AtomicU64,
    memo: Mutex<HashMap<ModelIndicator, f64>>,
}

impl<'a> EvidenceEngine<'a> {
    pub fn new(target: &'a PosteriorTarget, method: EvidenceMethod, seed: u64) -> Self {
        EvidenceEngine {
            target,
            method,
            seed,
            evaluations: AtomicU64::new(0),
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Requests counted against the budget (memo hits included).
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, gamma: &ModelIndicator, stream: &[u64]) -> Result<f64> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        if self.method.is_deterministic() {
            if let Some(v) = self.memo.lock().unwrap().get(gamma) {
                return Ok(*v);
            }
        }
        let v = model_evidence(gamma, self.target, self.method, mix(self.seed, stream))?;
        if self.method.is_deterministic() {
            self.memo.lock().unwrap().insert(gamma.clone(), v);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct VarselSmcOptions {
    pub particles: usize,
    pub tau: f64,
    pub moves: usize,
    pub method: EvidenceMethod,
}

impl VarselSmcOptions {
    pub fn new(particles: usize, method: EvidenceMethod) -> Self {
        VarselSmcOptions {
            particles,
            tau: 0.5,
            moves: 3,
            method,
        }
    }
}

/// Final state of a model-space tempering run.
#[derive(Debug, Clone)]
pub struct GammaParticleSystem {
    pub particles: Vec<ModelIndicator>,
    /// Cached `log p̂(D|γ)` carried by each particle.
    pub log_evidence: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub ladder: Vec<f64>,
    pub stages: Vec<StageRecord>,
    /// Estimate of `log Σ_γ p(γ) p(D|γ)`.
    pub log_normalizer: f64,
    pub evaluations: u64,
    pub audit: Vec<EvaluationRecord>,
}

impl GammaParticleSystem {
    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let w = normalize_log_weights(&self.log_weights);
        let p = self.particles.first().map_or(0, ModelIndicator::len);
        (0..p)
            .map(|j| self.particles.iter().zip(&w).filter(|(g, _)| g.0[j]).fold(0.0, |acc, (_, w)| acc + w))
            .collect()
    }

    /// Posterior mass of each distinct model among the weighted particles,
    /// most probable first.
    pub fn model_frequencies(&self) -> Vec<(ModelIndicator, f64)> {
        let w = normalize_log_weights(&self.log_weights);
        let mut mass: HashMap<&ModelIndicator, f64> = HashMap::new();
        for (g, wi) in self.particles.iter().zip(&w) {
            *mass.entry(g).or_default() += wi;
        }
        let mut out: Vec<(ModelIndicator, f64)> = mass.into_iter().map(|(g, m)| (g.clone(), m)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Tempering SMC over `{0,1}^p` from the uniform model prior to
/// `p(γ) p̂(D|γ)`, moving particles with independent Metropolis proposals
/// from a nested logistic fit to the current particles.
pub fn binary_smc_varsel(target: &PosteriorTarget, options: &VarselSmcOptions, seed: u64) -> Result<GammaParticleSystem> {
    let p = selectable(target);
    let n = options.particles;
    if n < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 particles, got {n}")));
    }
    let engine = EvidenceEngine::new(target, options.method, seed);
    let mut audit = Vec::new();

    let uniform = NestedLogisticProposal::uniform(p);
    let mut particles: Vec<ModelIndicator> = (0..n)
        .map(|i| uniform.sample(&mut substream(seed, &[tag::VARSEL_INIT, i as u64])))
        .collect();
    let mut log_ev = particles
        .par_iter()
        .enumerate()
        .map(|(i, g)| engine.evaluate(g, &[tag::VARSEL_PROPOSAL, 0, i as u64, u64::MAX]))
        .collect::<Result<Vec<f64>>>()?;
    audit.extend((0..n).map(|particle| EvaluationRecord {
        stage: 0,
        particle,
        step: None,
    }));

    let mut delta_low = 0.0;
    let mut log_normalizer = 0.0;
    let mut ladder = Vec::new();
    let mut stages = Vec::new();
    for stage in 0.. {
        let clock = Instant::now();
        let step = next_temperature(&log_ev, delta_low, options.tau)?;
        let delta = match step {
            TemperatureStep::Finish => 1.0,
            TemperatureStep::Next(d) => d,
        };
        let inc = incremental_log_weights(&log_ev, delta_low, delta);
        let increment = log_mean_exp(&inc);
        log_normalizer += increment;
        ladder.push(delta);
        let ef = efficiency_factor(&inc);
        if step == TemperatureStep::Finish {
            stages.push(StageRecord {
                stage,
                delta,
                ef,
                log_evidence_increment: increment,
                acceptance: None,
                wall_seconds: clock.elapsed().as_secs_f64(),
            });
            return Ok(GammaParticleSystem {
                particles,
                log_evidence: log_ev,
                log_weights: inc,
                ladder,
                stages,
                log_normalizer,
                evaluations: engine.evaluations(),
                audit,
            });
        }

        let ancestors = systematic_resample(
            &normalize_log_weights(&inc),
            n,
            mix(seed, &[tag::VARSEL_RESAMPLE, stage as u64]),
        )?
        .ancestors();
        particles = ancestors.iter().map(|&a| particles[a].clone()).collect();
        log_ev = ancestors.iter().map(|&a| log_ev[a]).collect();
        let proposal = fit_nested_logistic(&particles, &vec![1.0; n]);

        let moved = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, &[tag::VARSEL_MOVE, stage as u64, i as u64]);
                let mut gamma = particles[i].clone();
                let mut le = log_ev[i];
                let mut lq = proposal.log_pmf(&gamma);
                let mut accepted = 0;
                for k in 0..options.moves {
                    let cand = proposal.sample(&mut rng);
                    let cand_lq = proposal.log_pmf(&cand);
                    let cand_le = engine.evaluate(&cand, &[tag::VARSEL_PROPOSAL, stage as u64 + 1, i as u64, k as u64])?;
                    let u: f64 = rng.random();
                    if u.ln() < delta * (cand_le - le) + lq - cand_lq {
                        gamma = cand;
                        le = cand_le;
                        lq = cand_lq;
                        accepted += 1;
                    }
                }
                Ok((gamma, le, accepted))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0;
        for (i, (g, le, acc)) in moved.into_iter().enumerate() {
            particles[i] = g;
            log_ev[i] = le;
            total += acc;
            audit.extend((0..options.moves).map(|k| EvaluationRecord {
                stage: stage + 1,
                particle: i,
                step: Some(k),
            }));
        }
        let rate = if options.moves == 0 { 1.0 } else { total as f64 / (n * options.moves) as f64 };
        if rate < crate::smc::LOW_ACCEPTANCE && options.moves > 0 {
            log::warn!("model-space SMC stage {stage}: move acceptance {rate:.3} at δ = {delta:.4}");
        }
        stages.push(StageRecord {
            stage,
            delta,
            ef,
            log_evidence_increment: increment,
            acceptance: Some(rate),
            wall_seconds: clock.elapsed().as_secs_f64(),
        });
        delta_low = delta;
    }
    unreachable!()
}
