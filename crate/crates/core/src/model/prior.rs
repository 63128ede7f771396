use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::LN_2PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Gaussian,
    Cauchy,
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorKind::Gaussian => "gaussian",
            PriorKind::Cauchy => "cauchy",
        })
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(PriorKind::Gaussian),
            "cauchy" => Ok(PriorKind::Cauchy),
            other => Err(Error::InvalidArgument(format!("unknown prior `{other}`"))),
        }
    }
}

pub const INTERCEPT_SCALE: f64 = 10.0;
pub const SLOPE_SCALE: f64 = 2.5;

/// Independent zero-centred prior over the coefficients.
///
/// `scales` are the Cauchy scales `σ_j`; the Gaussian prior uses standard
/// deviations `2σ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub kind: PriorKind,
    pub scales: Vec<f64>,
}

impl Prior {
    pub fn new(kind: PriorKind, scales: Vec<f64>) -> Result<Self> {
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("prior scales must be positive and finite".into()));
        }
        Ok(Prior { kind, scales })
    }

    /// Scale 10 on the intercept (column 0 when present), 2.5 elsewhere.
    pub fn default_for(kind: PriorKind, p: usize, intercept: bool) -> Self {
        let scales = (0..p)
            .map(|j| if intercept && j == 0 { INTERCEPT_SCALE } else { SLOPE_SCALE })
            .collect();
        Prior { kind, scales }
    }

    /// Gaussian prior with the given standard deviations.
    pub fn gaussian_with_sd(sds: &[f64]) -> Result<Self> {
        Prior::new(PriorKind::Gaussian, sds.iter().map(|s| 0.5 * s).collect())
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Standard deviation of component `j` under the Gaussian prior.
    #[inline]
    pub fn gaussian_sd(&self, j: usize) -> f64 {
        2.0 * self.scales[j]
    }

    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        match self.kind {
            PriorKind::Gaussian => beta
                .iter()
                .zip(&self.scales)
                .map(|(b, s)| {
                    let sd = 2.0 * s;
                    -0.5 * LN_2PI - sd.ln() - 0.5 * (b / sd).powi(2)
                })
                .sum(),
            PriorKind::Cauchy => beta
                .iter()
                .zip(&self.scales)
                .map(|(b, s)| -(PI * s).ln() - (b / s).powi(2).ln_1p())
                .sum(),
        }
    }

    /// Gradient and diagonal of the Hessian of the log-density.
    pub fn log_density_derivatives(&self, beta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = beta.len();
        let mut grad = DVector::zeros(p);
        let mut hess = DVector::zeros(p);
        for j in 0..p {
            let b = beta[j];
            match self.kind {
                PriorKind::Gaussian => {
                    let prec = 1.0 / (2.0 * self.scales[j]).powi(2);
                    grad[j] = -b * prec;
                    hess[j] = -prec;
                }
                PriorKind::Cauchy => {
                    let s2 = self.scales[j].powi(2);
                    let d = s2 + b * b;
                    grad[j] = -2.0 * b / d;
                    hess[j] = -2.0 * (s2 - b * b) / (d * d);
                }
            }
        }
        (grad, hess)
    }

    pub fn restrict(&self, columns: &[usize]) -> Prior {
        Prior {
            kind: self.kind,
            scales: columns.iter().map(|&j| self.scales[j]).collect(),
        }
    }
}
