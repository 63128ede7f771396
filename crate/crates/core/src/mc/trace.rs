use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use super::weighted::WeightedSample;

pub const BATCHES: usize = 50;

/// Post-burn-in output of a Markov chain.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    /// `T × p`, one state per row (burn-in removed).
    pub states: DMatrix<f64>,
    pub log_posterior: Vec<f64>,
    /// Acceptance rate over the retained iterations.
    pub acceptance_rate: f64,
    pub burn_in: usize,
    /// Sampler-specific tuning and diagnostics.
    pub tuning: Map<String, Value>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.states.row_mean().transpose()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim(), self.dim());
        for row in self.states.row_iter() {
            let d = row.transpose() - &m;
            c.ger(1.0, &d, &d, 1.0);
        }
        c / (self.len().max(2) - 1) as f64
    }

    /// Batch-means standard error of the mean of component `j`.
    pub fn batch_means_se(&self, j: usize) -> f64 {
        batch_means_se(&self.states.column(j).iter().copied().collect::<Vec<_>>(), BATCHES)
    }

    pub fn to_weighted(&self) -> WeightedSample {
        WeightedSample::unweighted(self.states.clone())
    }
}

/// Standard error of the mean from `batches` contiguous batch means.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
