//! Tempering sequential Monte Carlo from a Gaussian proposal `q` to the
//! posterior through `π_δ ∝ q^{1−δ} (p(β) p(D|β))^δ`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::mc::{gaussian_points, WeightedSample};
use crate::model::PosteriorTarget;
use crate::rng::{substream, tag};
use crate::special::{efficiency_factor, log_mean_exp, normalize_log_weights};

/// Bisection stops once the EF is this close to the threshold.
pub const EF_TOL: f64 = 1e-6;
/// Stage acceptance below which a warning is logged.
pub const LOW_ACCEPTANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureStep {
    /// The remaining gap to δ = 1 can be bridged in one step.
    Finish,
    Next(f64),
}

/// `(δ − δ̲) ℓ_n`, keeping `−∞` entries at `−∞`.
pub fn incremental_log_weights(log_ratio: &[f64], delta_low: f64, delta: f64) -> Vec<f64> {
    let d = delta - delta_low;
    log_ratio
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { l } else { d * l })
        .collect()
}

/// Next tempering exponent: the `δ` at which the incremental weights
/// `ℓ_n^{δ−δ̲}` have efficiency factor `τ`.
pub fn next_temperature(log_ratio: &[f64], delta_low: f64, tau: f64) -> Result<TemperatureStep> {
    if !(0.0..1.0).contains(&delta_low) {
        return Err(Error::InvalidArgument(format!("current temperature {delta_low} outside [0, 1)")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("EF threshold {tau} outside (0, 1)")));
    }
    let ef = |d: f64| efficiency_factor(&incremental_log_weights(log_ratio, delta_low, d));
    if ef(1.0) >= tau {
        return Ok(TemperatureStep::Finish);
    }
    let (mut lo, mut hi) = (delta_low, 1.0);
    if ef(lo + f64::EPSILON * 16.0).is_nan() {
        log::warn!("efficiency factor undefined above δ = {delta_low}; forcing the final step");
        return Ok(TemperatureStep::Finish);
    }
    // Early stages can need δ − δ̲ of order 1e-6 or less, so stop on the
    // EF itself rather than on the bracket width.
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        let e = ef(mid);
        if (e - tau).abs() <= EF_TOL {
            break;
        }
        if e >= tau {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == lo || next == hi {
            break;
        }
        mid = next;
    }
    Ok(TemperatureStep::Next(mid))
}

/// Number of copies of each particle after resampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResampleOutcome {
    pub counts: Vec<usize>,
}

impl ResampleOutcome {
    /// Ancestor index of each resampled particle, in increasing order.
    pub fn ancestors(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
            .collect()
    }
}

/// Systematic resampling driven by a single uniform `u ∈ [0,1)`.
pub fn systematic_resample_with(weights: &[f64], n: usize, u: f64) -> Result<ResampleOutcome> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("resampling weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("all resampling weights are zero".into()));
    }
    let mut counts = vec![0; weights.len()];
    let mut cum = 0.0;
    let mut k = 0;
    for (i, w) in weights.iter().enumerate() {
        cum += w / total * n as f64;
        while k < n && (k as f64 + u) < cum {
            counts[i] += 1;
            k += 1;
        }
    }
    // rounding can leave the last point unassigned
    if k < n {
        let last = weights.iter().rposition(|w| *w > 0.0).unwrap();
        counts[last] += n - k;
    }
    Ok(ResampleOutcome { counts })
}

pub fn systematic_resample(weights: &[f64], n: usize, seed: u64) -> Result<ResampleOutcome> {
    let u: f64 = substream(seed, &[tag::SMC_RESAMPLE]).random();
    systematic_resample_with(weights, n, u)
}

#[derive(Debug, Clone)]
pub struct SmcOptions {
    pub particles: usize,
    /// EF threshold for choosing the next temperature.
    pub tau: f64,
    /// Metropolis moves per stage.
    pub moves: usize,
    /// Move covariance is `λ Σ̂`; defaults to `2.38²/p`.
    pub lambda: Option<f64>,
}

impl SmcOptions {
    pub fn new(particles: usize) -> Self {
        SmcOptions {
            particles,
            tau: 0.5,
            moves: 3,
            lambda: None,
        }
    }
}

/// Diagnostics of one tempering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub delta: f64,
    /// EF of the incremental weights that selected `delta`.
    pub ef: f64,
    pub log_evidence_increment: f64,
    /// Move acceptance rate; absent on the final stage.
    pub acceptance: Option<f64>,
    /// Kept out of serialized logs so they stay reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Final particle cloud of a tempering run.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub particles: DMatrix<f64>,
    pub log_weights: Vec<f64>,
    pub delta: f64,
    /// Exponents reached at the end of each stage; ends at 1.
    pub ladder: Vec<f64>,
    pub log_evidence: f64,
    pub acceptance: Vec<f64>,
    pub stages: Vec<StageRecord>,
}

impl ParticleSystem {
    pub fn to_weighted(&self) -> WeightedSample {
        let mut ws = WeightedSample::new(self.particles.clone(), self.log_weights.clone());
        ws.log_evidence = self.log_evidence;
        ws
    }

    pub fn write_stage_log(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for s in &self.stages {
            writeln!(f, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }
}

/// Weighted empirical covariance (equal weights after resampling).
fn empirical_covariance(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    let mean = points.row_mean();
    let mut centred = points.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    centred.transpose() * centred / (n.max(2) - 1) as f64
}

fn move_factor(points: &DMatrix<f64>, lambda: f64, q: &GaussianApprox) -> DMatrix<f64> {
    let mut cov = empirical_covariance(points) * lambda;
    let ridge = 1e-10 * cov.diagonal().max().max(f64::MIN_POSITIVE);
    for j in 0..cov.nrows() {
        cov[(j, j)] += ridge;
    }
    match cholesky(&cov, "SMC move covariance") {
        Ok(c) => c.l(),
        Err(_) => {
            log::warn!("particle covariance is singular; moving with the proposal covariance");
            q.cov_cholesky() * lambda.sqrt()
        }
    }
}

/// Adaptive tempering SMC with resample-move steps.
pub fn temper_smc(q: &GaussianApprox, target: &PosteriorTarget, options: &SmcOptions, seed: u64) -> Result<ParticleSystem> {
    let p = target.dim();
    let n = options.particles;
    if q.dim() != p {
        return Err(Error::InvalidArgument("proposal dimension does not match target".into()));
    }
    if n < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 particles, got {n}")));
    }
    let lambda = options.lambda.unwrap_or(2.38 * 2.38 / p as f64);

    let mut points = gaussian_points(q, n, seed);
    let mut log_q = q.log_density_batch(&points);
    let mut log_ratio: Vec<f64> = target
        .log_density_batch(&points)
        .iter()
        .zip(&log_q)
        .map(|(a, b)| if a.is_finite() { a - b } else { f64::NEG_INFINITY })
        .collect();

    let mut delta_low = 0.0;
    let mut log_evidence = 0.0;
    let mut ladder = Vec::new();
    let mut acceptance = Vec::new();
    let mut stages = Vec::new();
    for stage in 0.. {
        let clock = Instant::now();
        let step = next_temperature(&log_ratio, delta_low, options.tau)?;
        let delta = match step {
            TemperatureStep::Finish => 1.0,
            TemperatureStep::Next(d) => d,
        };
        let inc = incremental_log_weights(&log_ratio, delta_low, delta);
        let increment = log_mean_exp(&inc);
        if !increment.is_finite() {
            return Err(Error::DegenerateWeights(format!("all particles have zero weight at stage {stage}")));
        }
        log_evidence += increment;
        ladder.push(delta);
        let ef = efficiency_factor(&inc);
        if step == TemperatureStep::Finish {
            stages.push(StageRecord {
                stage,
                delta,
                ef,
                log_evidence_increment: increment,
                acceptance: None,
                wall_seconds: clock.elapsed().as_secs_f64(),
            });
            return Ok(ParticleSystem {
                particles: points,
                log_weights: inc,
                delta,
                ladder,
                log_evidence,
                acceptance,
                stages,
            });
        }

        let resample_seed = crate::rng::mix(seed, &[stage as u64]);
        let ancestors = systematic_resample(&normalize_log_weights(&inc), n, resample_seed)?.ancestors();
        points = points.select_rows(&ancestors);
        log_q = ancestors.iter().map(|&a| log_q[a]).collect();
        log_ratio = ancestors.iter().map(|&a| log_ratio[a]).collect();

        let factor = move_factor(&points, lambda, q);
        let moved: Vec<(DVector<f64>, f64, f64, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, &[tag::SMC_MOVE, stage as u64, i as u64]);
                let mut beta = points.row(i).transpose();
                let (mut lq, mut lr) = (log_q[i], log_ratio[i]);
                let mut accepted = 0;
                for _ in 0..options.moves {
                    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let prop = &beta + &factor * z;
                    let lp = target.log_density(&prop);
                    let u: f64 = rng.random();
                    if lp.is_finite() {
                        let pq = q.log_density(&prop);
                        let pr = lp - pq;
                        if u.ln() < (pq + delta * pr) - (lq + delta * lr) {
                            beta = prop;
                            lq = pq;
                            lr = pr;
                            accepted += 1;
                        }
                    }
                }
                (beta, lq, lr, accepted)
            })
            .collect();
        let mut total = 0;
        for (i, (beta, lq, lr, acc)) in moved.into_iter().enumerate() {
            points.set_row(i, &beta.transpose());
            log_q[i] = lq;
            log_ratio[i] = lr;
            total += acc;
        }
        let rate = if options.moves == 0 { 1.0 } else { total as f64 / (n * options.moves) as f64 };
        if rate < LOW_ACCEPTANCE && options.moves > 0 {
            log::warn!("SMC stage {stage}: move acceptance {rate:.3} at δ = {delta:.4} (λ = {lambda:.3})");
        }
        acceptance.push(rate);
        stages.push(StageRecord {
            stage,
            delta,
            ef,
            log_evidence_increment: increment,
            acceptance: Some(rate),
            wall_seconds: clock.elapsed().as_secs_f64(),
        });
        delta_low = delta;
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights_resample_to_single_copies() {
        let out = systematic_resample_with(&[1.0; 10], 10, 0.37).unwrap();
        assert_eq!(out.counts, vec![1; 10]);
        let out = systematic_resample(&[0.25; 8], 8, 3).unwrap();
        assert_eq!(out.counts.iter().sum::<usize>(), 8);
        assert!(out.counts.iter().all(|&c| c <= 2));
    }

    #[test]
    fn point_mass_takes_every_copy() {
        let mut w = vec![0.0; 6];
        w[0] = 1.0;
        assert_eq!(systematic_resample_with(&w, 50, 0.999).unwrap().counts[0], 50);
        assert!(matches!(systematic_resample_with(&[0.0; 3], 3, 0.5), Err(Error::DegenerateWeights(_))));
    }

    #[test]
    fn resampling_is_unbiased() {
        let w = [0.05, 0.3, 0.01, 0.24, 0.1, 0.3];
        let n = 7;
        let reps = 100_000;
        let mut sums = [0.0; 6];
        for r in 0..reps {
            let out = systematic_resample(&w, n, r).unwrap();
            assert_eq!(out.counts.iter().sum::<usize>(), n);
            for (s, c) in sums.iter_mut().zip(&out.counts) {
                *s += *c as f64;
            }
        }
        for (j, s) in sums.iter().enumerate() {
            let expected = n as f64 * w[j];
            // systematic counts vary less than binomial ones
            let se = (n as f64 * w[j] * (1.0 - w[j]) / reps as f64).sqrt();
            assert!((s / reps as f64 - expected).abs() < 4.0 * se, "index {j}");
        }
    }

    #[test]
    fn zero_exponent_gives_unit_ef() {
        let lr = [0.3, -2.0, 5.0];
        assert_eq!(efficiency_factor(&incremental_log_weights(&lr, 0.4, 0.4)), 1.0);
        assert_eq!(next_temperature(&[1.0; 5], 0.0, 0.5).unwrap(), TemperatureStep::Finish);
    }

    #[test]
    fn bisection_hits_the_threshold() {
        let lr: Vec<f64> = (0..400).map(|i| 30.0 * ((i as f64) * 0.731).sin()).collect();
        match next_temperature(&lr, 0.1, 0.5).unwrap() {
            TemperatureStep::Next(d) => {
                let ef = efficiency_factor(&incremental_log_weights(&lr, 0.1, d));
                assert!((ef - 0.5).abs() <= 1e-3, "EF {ef} at δ = {d}");
                assert!(d > 0.1 && d < 1.0);
            }
            TemperatureStep::Finish => panic!("weights this uneven cannot finish"),
        }
    }
}
