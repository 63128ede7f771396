//! Bayesian variable selection under a uniform prior on inclusion patterns.

mod enumerate;
mod evidence;
mod gibbs;
mod nested;
mod smc;

use std::path::Path;

use crate::error::Result;

pub use enumerate::{enumerate_varsel, Enumeration, MAX_ENUMERATION};
pub use evidence::{model_evidence, selectable, EvidenceMethod, ModelIndicator};
pub use gibbs::{gamma_gibbs, GammaGibbsResult};
pub use nested::{fit_nested_logistic, Conditional, NestedLogisticProposal, CLAMP, MIN_CORRELATION, RIDGE};
pub use smc::{binary_smc_varsel, EvaluationRecord, EvidenceEngine, GammaParticleSystem, VarselSmcOptions};

/// Draws per importance-sampling evidence estimate.
pub const INNER_DRAWS: usize = 512;

/// `covariate,inclusion_probability` rows.
pub fn write_inclusion(path: &Path, names: &[String], inclusion: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["covariate", "inclusion_probability"])?;
    for (name, p) in names.iter().zip(inclusion) {
        w.write_record([name.as_str(), &p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Most probable models, one row each, with the included covariates listed.
pub fn write_top_models(path: &Path, names: &[String], models: &[(ModelIndicator, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "pattern", "posterior_probability", "covariates"])?;
    for (rank, (g, prob)) in models.iter().enumerate() {
        let included: Vec<&str> = g.0.iter().zip(names).filter(|(b, _)| **b).map(|(_, n)| n.as_str()).collect();
        w.write_record([&(rank + 1).to_string(), &g.to_string(), &prob.to_string(), &included.join(" ")])?;
    }
    w.flush()?;
    Ok(())
}
