use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::weighted::WeightedSample;
use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::model::PosteriorTarget;
use crate::rng::{substream, tag};

/// Draws per random substream; fixed so results do not depend on threads.
pub const BLOCK: usize = 512;

/// `N` iid draws from `q`, as rows.
pub fn gaussian_points(q: &GaussianApprox, n: usize, seed: u64) -> DMatrix<f64> {
    let p = q.dim();
    let blocks: Vec<usize> = (0..n.div_ceil(BLOCK)).collect();
    let rows: Vec<DMatrix<f64>> = blocks
        .par_iter()
        .map(|&b| {
            let len = BLOCK.min(n - b * BLOCK);
            let mut rng = substream(seed, &[tag::GAUSSIAN_DRAWS, b as u64]);
            let z = DMatrix::from_fn(p, len, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut pts = q.cov_cholesky() * z;
            for mut col in pts.column_iter_mut() {
                col += q.mean();
            }
            pts.transpose()
        })
        .collect();
    let mut out = DMatrix::zeros(n, p);
    for (b, block) in rows.iter().enumerate() {
        out.rows_mut(b * BLOCK, block.nrows()).copy_from(block);
    }
    out
}

/// Importance weights `log p(β) + log p(D|β) − log q(β)` of given points.
pub fn importance_weights(q: &GaussianApprox, target: &PosteriorTarget, points: DMatrix<f64>) -> WeightedSample {
    let log_post = target.log_density_batch(&points);
    let log_q = q.log_density_batch(&points);
    let log_w = log_post
        .iter()
        .zip(&log_q)
        .map(|(a, b)| if a.is_finite() { a - b } else { f64::NEG_INFINITY })
        .collect();
    WeightedSample::new(points, log_w)
}

/// Importance sampling from the Gaussian proposal `q`.
pub fn importance_sample(q: &GaussianApprox, target: &PosteriorTarget, n: usize, seed: u64) -> Result<WeightedSample> {
    if n < 2 {
        return Err(Error::InvalidArgument("importance sampling needs N >= 2".into()));
    }
    if q.dim() != target.dim() {
        return Err(Error::InvalidArgument("proposal dimension does not match target".into()));
    }
    let points = gaussian_points(q, n, seed);
    Ok(importance_weights(q, target, points))
}
