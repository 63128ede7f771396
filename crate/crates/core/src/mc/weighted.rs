use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::special::{efficiency_factor, log_mean_exp, normalize_log_weights};

/// Draws with importance weights.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    /// `N × p`, one draw per row.
    pub points: DMatrix<f64>,
    pub log_weights: Vec<f64>,
    /// `log((1/N) Σ w_n)`.
    pub log_evidence: f64,
    /// `ESS / N`.
    pub ef: f64,
}

impl WeightedSample {
    pub fn new(points: DMatrix<f64>, log_weights: Vec<f64>) -> Self {
        assert_eq!(points.nrows(), log_weights.len());
        let log_evidence = log_mean_exp(&log_weights);
        let ef = efficiency_factor(&log_weights);
        WeightedSample {
            points,
            log_weights,
            log_evidence,
            ef,
        }
    }

    /// Equally weighted draws (MCMC output).
    pub fn unweighted(points: DMatrix<f64>) -> Self {
        let n = points.nrows();
        WeightedSample::new(points, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn ess(&self) -> f64 {
        self.ef * self.len() as f64
    }

    /// Normalized weights; error when every weight is zero.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        if self.log_weights.iter().all(|w| *w == f64::NEG_INFINITY) || self.is_empty() {
            return Err(Error::DegenerateWeights("all weights are zero".into()));
        }
        if self.log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::DegenerateWeights("weights are not finite".into()));
        }
        Ok(normalize_log_weights(&self.log_weights))
    }

    /// Self-normalized estimate of `E[φ(β)]` with its plug-in asymptotic
    /// standard error `sqrt(Σ W_n² (φ_n − est)²)`.
    pub fn self_normalized_estimate(&self, phi: impl Fn(&DVector<f64>) -> f64) -> Result<(f64, f64)> {
        let w = self.normalized_weights()?;
        let values: Vec<f64> = (0..self.len()).map(|n| phi(&self.points.row(n).transpose())).collect();
        Ok(weighted_estimate(&w, &values))
    }

    /// Self-normalized mean of component `j` with standard error.
    pub fn component_estimate(&self, j: usize) -> Result<(f64, f64)> {
        let w = self.normalized_weights()?;
        let values: Vec<f64> = self.points.column(j).iter().copied().collect();
        Ok(weighted_estimate(&w, &values))
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        let w = self.normalized_weights()?;
        let mut m = DVector::zeros(self.dim());
        for (n, wn) in w.iter().enumerate() {
            m.axpy(*wn, &self.points.row(n).transpose(), 1.0);
        }
        Ok(m)
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let w = self.normalized_weights()?;
        let m = self.mean()?;
        let p = self.dim();
        let mut c = DMatrix::zeros(p, p);
        for (n, wn) in w.iter().enumerate() {
            let d = self.points.row(n).transpose() - &m;
            c.ger(*wn, &d, &d, 1.0);
        }
        Ok(c)
    }
}

pub(crate) fn weighted_estimate(w: &[f64], values: &[f64]) -> (f64, f64) {
    let est: f64 = w.iter().zip(values).map(|(a, b)| a * b).sum();
    let var: f64 = w.iter().zip(values).map(|(a, b)| a * a * (b - est) * (b - est)).sum();
    (est, var.sqrt())
}
