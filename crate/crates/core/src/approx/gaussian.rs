use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, symmetrize};
use crate::special::LN_2PI;

/// Multivariate normal in both moment `(μ, Σ)` and natural `(r, Q)` form.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    shift: DVector<f64>,
    /// Lower Cholesky factor of the covariance.
    cov_chol: DMatrix<f64>,
    log_det_cov: f64,
    pub log_evidence: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GaussianJson {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    log_evidence: Option<f64>,
}

impl GaussianApprox {
    pub fn from_moments(mean: DVector<f64>, mut cov: DMatrix<f64>, log_evidence: Option<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::InvalidArgument("mean and covariance dimensions differ".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite mean".into()));
        }
        symmetrize(&mut cov);
        let chol = cholesky(&cov, "covariance")?;
        let log_det_cov = log_det(&chol);
        let mut precision = chol.inverse();
        symmetrize(&mut precision);
        let shift = &precision * &mean;
        Ok(GaussianApprox {
            mean,
            cov_chol: chol.l(),
            cov,
            precision,
            shift,
            log_det_cov,
            log_evidence,
        })
    }

    /// From natural parameters: `Σ = Q⁻¹`, `μ = Q⁻¹ r`.
    pub fn from_natural(shift: DVector<f64>, mut precision: DMatrix<f64>, log_evidence: Option<f64>) -> Result<Self> {
        symmetrize(&mut precision);
        let chol_q = cholesky(&precision, "precision")?;
        let mean = chol_q.solve(&shift);
        let mut cov = chol_q.inverse();
        symmetrize(&mut cov);
        let chol = cholesky(&cov, "covariance")?;
        Ok(GaussianApprox {
            mean,
            log_det_cov: -log_det(&chol_q),
            cov_chol: chol.l(),
            cov,
            precision,
            shift,
            log_evidence,
        })
    }

    /// Independent components with the given means and standard deviations.
    pub fn diagonal(mean: &[f64], sd: &[f64]) -> Result<Self> {
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(sd.len(), sd.iter().map(|s| s * s)));
        GaussianApprox::from_moments(DVector::from_column_slice(mean), cov, None)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn cov_cholesky(&self) -> &DMatrix<f64> {
        &self.cov_chol
    }

    pub fn sd(&self, j: usize) -> f64 {
        self.cov[(j, j)].sqrt()
    }

    pub fn with_log_evidence(mut self, log_evidence: Option<f64>) -> Self {
        self.log_evidence = log_evidence;
        self
    }

    /// Normalized log-density.
    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let diff = beta - &self.mean;
        let z = self
            .cov_chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor is nonsingular");
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det_cov + z.norm_squared())
    }

    /// Log-density of each row of `points` (`N × p`).
    pub fn log_density_batch(&self, points: &DMatrix<f64>) -> Vec<f64> {
        let n = points.nrows();
        let mut centred = points.transpose();
        for mut col in centred.column_iter_mut() {
            col -= &self.mean;
        }
        let z = self
            .cov_chol
            .solve_lower_triangular(&centred)
            .expect("Cholesky factor is nonsingular");
        let c = self.dim() as f64 * LN_2PI + self.log_det_cov;
        (0..n).map(|k| -0.5 * (c + z.column(k).norm_squared())).collect()
    }

    /// `μ + L z` for a standard normal vector `z`.
    pub fn transform(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.cov_chol * z
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.transform(&z)
    }

    pub fn to_json(&self) -> Result<String> {
        let json = GaussianJson {
            mean: self.mean.iter().copied().collect(),
            covariance: self.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
            log_evidence: self.log_evidence,
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: GaussianJson = serde_json::from_str(text)?;
        let p = json.mean.len();
        if json.covariance.len() != p || json.covariance.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument("covariance is not p × p".into()));
        }
        let cov = DMatrix::from_fn(p, p, |i, j| json.covariance[i][j]);
        GaussianApprox::from_moments(DVector::from_vec(json.mean), cov, json.log_evidence)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        GaussianApprox::from_json(&std::fs::read_to_string(path)?)
    }
}
