use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::evidence::ModelIndicator;
use crate::special::{log_logistic, logistic};

/// Penalty on the non-intercept coefficients of each conditional fit.
pub const RIDGE: f64 = 1e-2;
/// Conditional probabilities are kept inside `[CLAMP, 1 − CLAMP]`.
pub const CLAMP: f64 = 1e-4;
/// Earlier bits enter a conditional only if their weighted correlation with
/// the bit being modelled exceeds this in absolute value.
pub const MIN_CORRELATION: f64 = 0.1;

/// One conditional: `P(γ_j = 1 | γ_{<j}) = logistic(a_0 + Σ_k a_k γ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub intercept: f64,
    /// `(k, a_k)` pairs with `k < j`.
    pub terms: Vec<(usize, f64)>,
}

impl Conditional {
    fn probability(&self, gamma: &[bool]) -> f64 {
        let eta = self.intercept + self.terms.iter().filter(|(k, _)| gamma[*k]).map(|(_, a)| a).sum::<f64>();
        logistic(eta).clamp(CLAMP, 1.0 - CLAMP)
    }
}

/// Chain of logistic regressions defining a pmf on `{0,1}^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedLogisticProposal {
    pub conditionals: Vec<Conditional>,
}

impl NestedLogisticProposal {
    /// Independent fair coins.
    pub fn uniform(p: usize) -> Self {
        NestedLogisticProposal {
            conditionals: vec![
                Conditional {
                    intercept: 0.0,
                    terms: Vec::new(),
                };
                p
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.conditionals.len()
    }

    pub fn log_pmf(&self, gamma: &ModelIndicator) -> f64 {
        self.conditionals
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let pr = c.probability(&gamma.0);
                if gamma.0[j] { pr.ln() } else { (1.0 - pr).ln() }
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelIndicator {
        let mut gamma = vec![false; self.dim()];
        for (j, c) in self.conditionals.iter().enumerate() {
            let u: f64 = rng.random();
            gamma[j] = u < c.probability(&gamma);
        }
        ModelIndicator(gamma)
    }
}

/// Fits the chain by penalized weighted maximum likelihood. `weights` need
/// not be normalized.
pub fn fit_nested_logistic(particles: &[ModelIndicator], weights: &[f64]) -> NestedLogisticProposal {
    assert_eq!(particles.len(), weights.len());
    let p = particles.first().map_or(0, ModelIndicator::len);
    let n = particles.len();
    let total: f64 = weights.iter().sum();
    // rescale so the weights sum to the number of particles
    let w: Vec<f64> = weights.iter().map(|x| x * n as f64 / total).collect();
    let bits = DMatrix::from_fn(n, p, |i, j| if particles[i].0[j] { 1.0 } else { 0.0 });
    let means: Vec<f64> = (0..p).map(|j| weighted_mean(&w, bits.column(j).iter())).collect();

    let conditionals = (0..p)
        .map(|j| {
            let m = means[j];
            if m <= CLAMP || m >= 1.0 - CLAMP {
                return Conditional {
                    intercept: logit(m.clamp(CLAMP, 1.0 - CLAMP)),
                    terms: Vec::new(),
                };
            }
            let predictors: Vec<usize> = (0..j)
                .filter(|&k| weighted_correlation(&w, &bits, j, k, &means).abs() > MIN_CORRELATION)
                .collect();
            fit_conditional(&w, &bits, j, &predictors, m)
        })
        .collect();
    NestedLogisticProposal { conditionals }
}

fn logit(m: f64) -> f64 {
    (m / (1.0 - m)).ln()
}

fn weighted_mean<'a>(w: &[f64], values: impl Iterator<Item = &'a f64>) -> f64 {
    w.iter().zip(values).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()
}

fn weighted_correlation(w: &[f64], bits: &DMatrix<f64>, j: usize, k: usize, means: &[f64]) -> f64 {
    let (mj, mk) = (means[j], means[k]);
    let mut cov = 0.0;
    for (i, wi) in w.iter().enumerate() {
        cov += wi * (bits[(i, j)] - mj) * (bits[(i, k)] - mk);
    }
    let total: f64 = w.iter().sum();
    let var = (mj * (1.0 - mj)) * (mk * (1.0 - mk));
    if var <= 0.0 { 0.0 } else { cov / total / var.sqrt() }
}

/// Penalized IRLS for one conditional.
fn fit_conditional(w: &[f64], bits: &DMatrix<f64>, j: usize, predictors: &[usize], mean: f64) -> Conditional {
    let d = predictors.len() + 1;
    let n = w.len();
    let design = DMatrix::from_fn(n, d, |i, c| if c == 0 { 1.0 } else { bits[(i, predictors[c - 1])] });
    let target = bits.column(j);
    let mut a = DVector::zeros(d);
    a[0] = logit(mean);
    let objective = |a: &DVector<f64>| -> f64 {
        let eta = &design * a;
        let ll: f64 = (0..n)
            .map(|i| w[i] * if target[i] > 0.5 { log_logistic(eta[i]) } else { log_logistic(-eta[i]) })
            .sum();
        ll - 0.5 * RIDGE * a.rows(1, d - 1).norm_squared()
    };
    let mut value = objective(&a);
    for _ in 0..100 {
        let eta = &design * &a;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..n {
            let pr = logistic(eta[i]);
            let row = design.row(i).transpose();
            grad.axpy(w[i] * (target[i] - pr), &row, 1.0);
            hess.ger(w[i] * pr * (1.0 - pr), &row, &row, 1.0);
        }
        for c in 1..d {
            grad[c] -= RIDGE * a[c];
            hess[(c, c)] += RIDGE;
        }
        hess[(0, 0)] += 1e-12;
        let Some(step) = hess.clone().cholesky().map(|ch| ch.solve(&grad)) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &a + &step * t;
            let v = objective(&cand);
            if v >= value {
                let gain = v - value;
                a = cand;
                value = v;
                improved = gain > 1e-12 * value.abs().max(1.0);
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Conditional {
        intercept: a[0],
        terms: predictors.iter().enumerate().map(|(c, &k)| (k, a[c + 1])).collect(),
    }
}
