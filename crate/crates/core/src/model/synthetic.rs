use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::Dataset;
use super::link::Link;
use crate::rng::substream;

/// Simulated data set with an intercept column followed by standard normal
/// covariates scaled to sd 0.5; `beta` includes the intercept coefficient.
pub fn synthetic_dataset(n: usize, beta: &[f64], link: Link, seed: u64) -> Dataset {
    let p = beta.len();
    let mut rng = substream(seed, &[0x5EED]);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let b = DVector::from_column_slice(beta);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = 0.5 * z;
        }
        let eta = x.row(i).transpose().dot(&b);
        let u: f64 = rng.random();
        y[i] = if u < link.cdf(eta) { 1.0 } else { -1.0 };
    }
    let mut names = vec!["(Intercept)".to_string()];
    names.extend((1..p).map(|j| format!("x{j}")));
    Dataset::new(y, x, names, true).expect("synthetic data are valid")
}
