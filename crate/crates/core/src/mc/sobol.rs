use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::importance::importance_weights;
use super::sobol_table::{INITIAL_NUMBERS, MAX_SOBOL_DIM, POLYNOMIALS};
use super::weighted::WeightedSample;
use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::model::PosteriorTarget;
use crate::rng::{mix, tag};
use crate::special::norm_ppf;

const BITS: usize = 32;

/// Sobol' sequence in Gray-code order, 32-bit resolution.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(Error::Config(format!(
                "Sobol' generator supports 1..={MAX_SOBOL_DIM} dimensions, got {dim}"
            )));
        }
        let directions = (0..dim).map(direction_numbers).collect();
        Ok(Sobol { directions })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Integer coordinates of point `index` (direct Gray-code evaluation).
    pub fn point_bits(&self, index: u32) -> Vec<u32> {
        let gray = index ^ (index >> 1);
        self.directions
            .iter()
            .map(|v| {
                let mut x = 0u32;
                let mut g = gray;
                let mut k = 0;
                while g != 0 {
                    if g & 1 == 1 {
                        x ^= v[k];
                    }
                    g >>= 1;
                    k += 1;
                }
                x
            })
            .collect()
    }

    /// Unscrambled point in `[0,1)^d`.
    pub fn point(&self, index: u32) -> Vec<f64> {
        self.point_bits(index).into_iter().map(|x| x as f64 / 2f64.powi(BITS as i32)).collect()
    }
}

fn direction_numbers(d: usize) -> [u32; BITS] {
    let mut m = [0u32; BITS];
    if d == 0 {
        m = [1; BITS];
    } else {
        let poly = POLYNOMIALS[d];
        let s = (31 - poly.leading_zeros()) as usize;
        m[..s].copy_from_slice(&INITIAL_NUMBERS[d][..s]);
        for j in s..BITS {
            let mut next = m[j - s] ^ (m[j - s] << s);
            for k in 1..s {
                if (poly >> (s - k)) & 1 == 1 {
                    next ^= m[j - k] << k;
                }
            }
            m[j] = next;
        }
    }
    let mut v = [0u32; BITS];
    for (k, vk) in v.iter_mut().enumerate() {
        *vk = m[k] << (BITS - 1 - k);
    }
    v
}

/// Nested uniform scrambling of one coordinate: bit `k` is flipped by a coin
/// that depends on the `k` leading bits, then the value is jittered uniformly
/// within its 2^-32 cell so that it lies strictly inside (0, 1).
pub fn owen_scramble(x: u32, seed: u64, dim: usize) -> f64 {
    let mut out = 0u32;
    for k in 0..BITS {
        let prefix = if k == 0 { 0 } else { (x >> (BITS - k)) as u64 };
        let flip = (mix(seed, &[dim as u64, k as u64, prefix]) >> 63) as u32;
        let bit = ((x >> (BITS - 1 - k)) & 1) ^ flip;
        out |= bit << (BITS - 1 - k);
    }
    let jitter = mix(seed, &[dim as u64, BITS as u64, x as u64]) >> 11;
    let low = (jitter as f64 + 0.5) / 2f64.powi(53);
    ((out as f64 + low) / 2f64.powi(BITS as i32)).min(1.0 - f64::EPSILON / 2.0)
}

/// First `n` points of an Owen-scrambled Sobol' sequence, as rows.
pub fn scrambled_sobol(dim: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sobol = Sobol::new(dim)?;
    if n > 1 << BITS.min(31) {
        return Err(Error::Config("too many Sobol' points requested".into()));
    }
    let rows: Vec<Vec<f64>> = (0..n as u32)
        .into_par_iter()
        .map(|i| {
            sobol
                .point_bits(i)
                .into_iter()
                .enumerate()
                .map(|(d, x)| owen_scramble(x, seed, d))
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, dim, |i, j| rows[i][j]))
}

/// Replicated randomized-QMC importance sampling runs.
#[derive(Debug, Clone)]
pub struct RqmcResult {
    pub replications: Vec<WeightedSample>,
    /// `R × p` self-normalized posterior means, one row per replication.
    pub means: DMatrix<f64>,
    pub log_evidence: Vec<f64>,
}

impl RqmcResult {
    /// Average of the replication posterior means.
    pub fn mean(&self) -> DVector<f64> {
        self.means.row_mean().transpose()
    }

    /// Across-replication variance of each posterior-mean estimate.
    pub fn mean_variance(&self) -> DVector<f64> {
        self.means.row_variance().transpose() * replication_correction(self.means.nrows())
    }

    /// Evidence averaged over replications (log scale).
    pub fn pooled_log_evidence(&self) -> f64 {
        crate::special::log_mean_exp(&self.log_evidence)
    }

    /// Across-replication variance of `Z / Ẑ`, where `Ẑ` is the pooled estimate.
    pub fn relative_evidence_variance(&self) -> f64 {
        let pooled = self.pooled_log_evidence();
        let r: Vec<f64> = self.log_evidence.iter().map(|l| (l - pooled).exp()).collect();
        let m = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r.len() - 1) as f64
    }

    /// Per-component mean squared error of the replication means about `truth`.
    pub fn mse(&self, truth: &DVector<f64>) -> DVector<f64> {
        let r = self.means.nrows() as f64;
        DVector::from_fn(self.means.ncols(), |j, _| {
            self.means.column(j).iter().map(|m| (m - truth[j]).powi(2)).sum::<f64>() / r
        })
    }
}

fn replication_correction(r: usize) -> f64 {
    r as f64 / (r as f64 - 1.0)
}

/// `β_n = μ + C Φ⁻¹(u_n)` for a scrambled Sobol' point set.
pub fn rqmc_points(q: &GaussianApprox, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let u = scrambled_sobol(q.dim(), n, seed)?;
    let z = u.map(norm_ppf);
    let mut pts = q.cov_cholesky() * z.transpose();
    for mut col in pts.column_iter_mut() {
        col += q.mean();
    }
    Ok(pts.transpose())
}

/// `R` independent RQMC importance-sampling runs of `N` points each.
pub fn rqmc_importance_sample(
    q: &GaussianApprox,
    target: &PosteriorTarget,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<RqmcResult> {
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::Config(format!("RQMC needs N to be a power of two, got {n}")));
    }
    if replications < 8 {
        return Err(Error::Config(format!("RQMC needs at least 8 replications, got {replications}")));
    }
    if q.dim() > MAX_SOBOL_DIM {
        return Err(Error::Config(format!(
            "dimension {} exceeds the {MAX_SOBOL_DIM} available Sobol' direction numbers",
            q.dim()
        )));
    }
    if q.dim() != target.dim() {
        return Err(Error::InvalidArgument("proposal dimension does not match target".into()));
    }
    let p = q.dim();
    let mut means = DMatrix::zeros(replications, p);
    let mut log_evidence = Vec::with_capacity(replications);
    let mut reps = Vec::with_capacity(replications);
    for r in 0..replications {
        let points = rqmc_points(q, n, mix(seed, &[tag::RQMC, r as u64]))?;
        let ws = importance_weights(q, target, points);
        means.set_row(r, &ws.mean()?.transpose());
        log_evidence.push(ws.log_evidence);
        reps.push(ws);
    }
    Ok(RqmcResult {
        replications: reps,
        means,
        log_evidence,
    })
}
