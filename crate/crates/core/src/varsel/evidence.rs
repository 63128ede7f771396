use std::fmt;
use std::str::FromStr;

use crate::approx::laplace;
use crate::ep::{ep_fit, EpOptions};
use crate::error::{Error, Result};
use crate::mc::importance_sample;
use crate::model::PosteriorTarget;

/// Inclusion pattern over the selectable covariates. The intercept, when the
/// target has one, is always in the model and is not part of the pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelIndicator(pub Vec<bool>);

impl ModelIndicator {
    pub fn empty(p: usize) -> Self {
        ModelIndicator(vec![false; p])
    }

    /// Pattern whose bits are the binary digits of `index` (bit j ↔ covariate j).
    pub fn from_index(index: u64, p: usize) -> Self {
        ModelIndicator((0..p).map(|j| (index >> j) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// `log p(γ) = −p log 2` under the uniform model prior.
    pub fn log_prior(&self) -> f64 {
        -(self.len() as f64) * std::f64::consts::LN_2
    }

    /// Columns of the full design used by this model.
    pub fn columns(&self, target: &PosteriorTarget) -> Vec<usize> {
        let offset = usize::from(target.has_intercept());
        let mut cols: Vec<usize> = (0..offset).collect();
        cols.extend(self.0.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j + offset));
        cols
    }
}

impl fmt::Display for ModelIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Number of selectable covariates of `target`.
pub fn selectable(target: &PosteriorTarget) -> usize {
    target.dim() - usize::from(target.has_intercept())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceMethod {
    Laplace,
    Ep,
    /// Importance sampling from the restricted model's Laplace approximation.
    Is(usize),
}

impl EvidenceMethod {
    /// Whether repeated evaluations give the same value.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, EvidenceMethod::Is(_))
    }
}

impl fmt::Display for EvidenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvidenceMethod::Laplace => f.write_str("laplace"),
            EvidenceMethod::Ep => f.write_str("ep"),
            EvidenceMethod::Is(n) => write!(f, "is:{n}"),
        }
    }
}

impl FromStr for EvidenceMethod {
    type Err = Error;

    /// `laplace`, `ep`, `is` (512 draws) or `is:N`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "laplace" => Ok(EvidenceMethod::Laplace),
            "ep" => Ok(EvidenceMethod::Ep),
            "is" => Ok(EvidenceMethod::Is(super::INNER_DRAWS)),
            _ => {
                let n = s
                    .strip_prefix("is:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown evidence method `{s}`")))?;
                Ok(EvidenceMethod::Is(n))
            }
        }
    }
}

/// Log-evidence (or, for `Is`, the log of an unbiased estimate) of the model
/// restricted to the columns selected by `gamma`.
pub fn model_evidence(gamma: &ModelIndicator, target: &PosteriorTarget, method: EvidenceMethod, seed: u64) -> Result<f64> {
    if gamma.len() != selectable(target) {
        return Err(Error::InvalidArgument(format!(
            "model pattern has {} bits for {} selectable covariates",
            gamma.len(),
            selectable(target)
        )));
    }
    let cols = gamma.columns(target);
    if cols.is_empty() {
        // every linear predictor is zero: each observation has probability 1/2
        return Ok(-(target.n_obs() as f64) * std::f64::consts::LN_2);
    }
    let restricted = target.restrict(&cols);
    let tagged = |e: Error| Error::Model {
        model: gamma.to_string(),
        source: Box::new(e),
    };
    let value = match method {
        EvidenceMethod::Laplace => laplace(&restricted).map_err(tagged)?.log_evidence,
        EvidenceMethod::Ep => ep_fit(&restricted, &EpOptions::default()).map_err(tagged)?.0.log_evidence,
        EvidenceMethod::Is(n) => {
            let q = laplace(&restricted).map_err(tagged)?;
            Some(importance_sample(&q, &restricted, n, seed).map_err(tagged)?.log_evidence)
        }
    };
    value.ok_or_else(|| tagged(Error::Numerical("approximation returned no evidence".into())))
}
