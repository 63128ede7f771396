mod common;

use binreg::approx::{laplace, GaussianApprox};
use binreg::mc::{
    batch_means_se, gibbs_probit, hmc, importance_sample, rqmc_importance_sample, rwmh, scrambled_sobol,
    ChainTrace, GibbsOptions, GibbsSampler, HmcOptions, RwmhOptions,
};
use binreg::model::{Link, PosteriorTarget, Prior, PriorKind};
use binreg_oracle as oracle;
use common::{case_from, synthetic_case};
use nalgebra::{DMatrix, DVector};

fn within_se(trace: &ChainTrace, truth: &[f64], k: f64) {
    let m = trace.mean();
    for (j, t) in truth.iter().enumerate() {
        let se = trace.batch_means_se(j);
        assert!((m[j] - t).abs() < k * se, "component {j}: {} vs {t} (se {se})", m[j]);
    }
}

#[test]
fn importance_evidence_is_within_reported_error_for_most_seeds() {
    let case = synthetic_case(60, Link::Logit, PriorKind::Gaussian, 1);
    let truth = oracle::posterior_by_quadrature(&case.problem, 401).log_evidence;
    let q = laplace(&case.target).unwrap();
    let n = 2000;
    let mut covered = 0;
    for seed in 0..100 {
        let ws = importance_sample(&q, &case.target, n, seed).unwrap();
        let w: Vec<f64> = ws.log_weights.iter().map(|l| (l - truth).exp()).collect();
        let m = w.iter().sum::<f64>() / n as f64;
        let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if ((ws.log_evidence - truth).exp() - 1.0).abs() < 3.0 * sd / (n as f64).sqrt() {
            covered += 1;
        }
    }
    assert!(covered >= 95, "{covered}/100 seeds within 3 se");
}

#[test]
fn importance_evidence_is_unbiased() {
    let case = synthetic_case(40, Link::Probit, PriorKind::Cauchy, 2);
    let truth = oracle::posterior_by_quadrature(&case.problem, 401).log_evidence;
    let q = laplace(&case.target).unwrap();
    let z: Vec<f64> = (0..200)
        .map(|seed| (importance_sample(&q, &case.target, 100, 1000 + seed).unwrap().log_evidence - truth).exp())
        .collect();
    let m = z.iter().sum::<f64>() / 200.0;
    let sd = (z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!((m - 1.0).abs() < 3.0 * sd / 200f64.sqrt(), "mean ratio {m}, sd {sd}");
}

#[test]
fn self_normalized_mean_matches_quadrature() {
    let case = synthetic_case(50, Link::Logit, PriorKind::Cauchy, 3);
    let grid = oracle::posterior_by_quadrature(&case.problem, 401);
    let q = laplace(&case.target).unwrap();
    let ws = importance_sample(&q, &case.target, 20_000, 7).unwrap();
    for j in 0..2 {
        let (est, se) = ws.component_estimate(j).unwrap();
        assert!((est - grid.mean[j]).abs() < 3.0 * se, "component {j}: {est} vs {} (se {se})", grid.mean[j]);
    }
    let (c, se) = ws.self_normalized_estimate(|_| 2.5).unwrap();
    assert!((c - 2.5).abs() < 1e-12 && se < 1e-12);
}

#[test]
fn scrambled_coordinates_pass_kolmogorov_smirnov() {
    let n = 1 << 14;
    let u = scrambled_sobol(6, n, 2024).unwrap();
    // asymptotic critical value at the 1% level
    let critical = 1.628 / (n as f64).sqrt();
    for d in 0..6 {
        let mut col: Vec<f64> = u.column(d).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let stat = col
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - x))
            .fold(0.0, f64::max);
        assert!(stat < critical, "dimension {d}: D = {stat}");
    }
}

#[test]
fn rqmc_beats_plain_importance_sampling() {
    let case = synthetic_case(80, Link::Probit, PriorKind::Gaussian, 4);
    let grid = oracle::posterior_by_quadrature(&case.problem, 401);
    let truth = DVector::from_vec(grid.mean.clone());
    let q = laplace(&case.target).unwrap();
    let n = 1 << 10;
    let r = 16;
    let rqmc = rqmc_importance_sample(&q, &case.target, n, r, 5).unwrap();
    let plain_mse: f64 = (0..r)
        .map(|k| {
            let m = importance_sample(&q, &case.target, n, 500 + k as u64).unwrap().mean().unwrap();
            (m - &truth).norm_squared()
        })
        .sum::<f64>()
        / r as f64;
    let rqmc_mse = rqmc.mse(&truth).sum();
    assert!(plain_mse / rqmc_mse > 2.0, "plain {plain_mse} vs rqmc {rqmc_mse}");
    assert!(rqmc.mean_variance().iter().all(|v| *v > 0.0));
    assert!(rqmc_importance_sample(&q, &case.target, 1000, 8, 1).is_err());
    assert!(rqmc_importance_sample(&q, &case.target, 1024, 4, 1).is_err());
}

fn gaussian_target(p: usize) -> (PosteriorTarget, GaussianApprox) {
    let prior = Prior::default_for(PriorKind::Gaussian, p, true);
    let sd: Vec<f64> = (0..p).map(|j| prior.gaussian_sd(j)).collect();
    let q = GaussianApprox::diagonal(&vec![0.0; p], &sd).unwrap();
    (PosteriorTarget::prior_only(prior, Link::Probit), q)
}

#[test]
fn rwmh_acceptance_is_in_the_optimal_scaling_regime() {
    let (t, q) = gaussian_target(20);
    let trace = rwmh(&t, &q, &RwmhOptions::new(20_000), 1).unwrap();
    assert!((0.15..=0.35).contains(&trace.acceptance_rate), "{}", trace.acceptance_rate);
    let mut tiny = RwmhOptions::new(2000);
    tiny.lambda = 1e-4;
    assert!(rwmh(&t, &q, &tiny, 1).unwrap().acceptance_rate > 0.99);
}

#[test]
fn rwmh_means_match_quadrature() {
    let case = synthetic_case(60, Link::Logit, PriorKind::Gaussian, 5);
    let grid = oracle::posterior_by_quadrature(&case.problem, 401);
    let q = laplace(&case.target).unwrap();
    let trace = rwmh(&case.target, &q, &RwmhOptions::new(200_000), 9).unwrap();
    within_se(&trace, &grid.mean, 3.0);
}

/// Total variation between the histogram of a 1-D chain and the exact posterior.
fn histogram_tv(states: &[f64], grid: &oracle::GridPosterior) -> f64 {
    let (x, dens) = &grid.marginals[0];
    let lo = x[0];
    let hi = x[x.len() - 1];
    let bins = 20;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for s in states {
        let b = (((s - lo) / width) as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1.0 / states.len() as f64;
    }
    let mut exact = vec![0.0; bins];
    for k in 1..x.len() {
        let mid = 0.5 * (x[k] + x[k - 1]);
        let b = (((mid - lo) / width) as usize).min(bins - 1);
        exact[b] += 0.5 * (dens[k] + dens[k - 1]) * (x[k] - x[k - 1]);
    }
    0.5 * counts.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn one_dimensional_case() -> common::Case {
    let full = synthetic_case(30, Link::Probit, PriorKind::Gaussian, 6);
    let data = full.data.select_columns(&[1]);
    case_from(data, Link::Probit, PriorKind::Gaussian)
}

#[test]
fn rwmh_and_hmc_reproduce_a_one_dimensional_posterior() {
    let case = one_dimensional_case();
    let grid = oracle::posterior_by_quadrature(&case.problem, 2001);
    let q = laplace(&case.target).unwrap();
    let rw = rwmh(&case.target, &q, &RwmhOptions::new(200_000), 3).unwrap();
    let tv = histogram_tv(rw.states.as_slice(), &grid);
    assert!(tv < 0.02, "rwmh tv {tv}");
    let h = hmc(&case.target, &q, &HmcOptions::new(100_000), 3).unwrap();
    let tv = histogram_tv(h.states.as_slice(), &grid);
    assert!(tv < 0.02, "hmc tv {tv}");
}

#[test]
fn gibbs_latents_respect_labels_and_means_match_quadrature() {
    for kind in [PriorKind::Gaussian, PriorKind::Cauchy] {
        let case = synthetic_case(50, Link::Probit, kind, 7);
        let grid = oracle::posterior_by_quadrature(&case.problem, 401);
        let trace = gibbs_probit(&case.target, &GibbsOptions::new(100_000), 11).unwrap();
        assert!(trace.tuning["min_latent_margin"].as_f64().unwrap() > 0.0);
        within_se(&trace, &grid.mean, 3.0);
    }
}

#[test]
fn gibbs_conditional_mean_is_a_ridge_solve() {
    let case = synthetic_case(40, Link::Probit, PriorKind::Gaussian, 8);
    let sampler = GibbsSampler::new(&case.target, None, 1).unwrap();
    let w = DVector::from_fn(40, |i, _| 0.1 + (i as f64 * 0.37).sin().abs());
    let (mean, _) = sampler.beta_conditional(&w, None).unwrap();
    let s = case.target.signed_design();
    let prior = case.target.prior();
    let mut a = s.transpose() * s;
    for j in 0..2 {
        a[(j, j)] += prior.gaussian_sd(j).powi(-2);
    }
    let direct = a.lu().solve(&(s.transpose() * &w)).unwrap();
    assert!((mean - direct).amax() < 1e-10);
}

#[test]
fn gibbs_rejects_the_logit_link() {
    let case = synthetic_case(20, Link::Logit, PriorKind::Gaussian, 9);
    assert!(matches!(
        gibbs_probit(&case.target, &GibbsOptions::new(10), 1),
        Err(binreg::Error::Unsupported(_))
    ));
}

#[test]
fn gibbs_scale_mixture_reproduces_the_cauchy_prior() {
    // β | s ~ N(0, σ²/s), s ~ Gamma(1/2, rate 1/2): integrate s out numerically
    let sigma = 2.5;
    for &b in &[0.0, 1.0, 4.0, 20.0] {
        let f = |u: f64| {
            // s = u² / (1 - u)² maps (0,1) onto (0,∞)
            if u <= 0.0 || u >= 1.0 {
                return 0.0;
            }
            let s = (u / (1.0 - u)).powi(2);
            let ds = 2.0 * u / (1.0 - u).powi(3);
            let gamma = (-0.5 * s).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
            let normal = (s / (2.0 * std::f64::consts::PI * sigma * sigma)).sqrt() * (-0.5 * s * b * b / (sigma * sigma)).exp();
            gamma * normal * ds
        };
        let mixed = oracle::simpson(f, 0.0, 1.0, 200_000);
        let cauchy = 1.0 / (std::f64::consts::PI * sigma * (1.0 + (b / sigma).powi(2)));
        assert!((mixed / cauchy - 1.0).abs() < 1e-6, "β = {b}: {mixed} vs {cauchy}");
    }
    // and the sampler itself: with no data the β draws follow the prior
    let prior = Prior::default_for(PriorKind::Cauchy, 2, true);
    let t = PosteriorTarget::prior_only(prior, Link::Probit);
    let trace = gibbs_probit(&t, &GibbsOptions::new(100_000), 4).unwrap();
    for (j, scale) in [10.0, 2.5].into_iter().enumerate() {
        let inside = trace.states.column(j).iter().filter(|b| b.abs() < scale).count() as f64 / trace.len() as f64;
        assert!((inside - 0.5).abs() < 0.01, "component {j}: {inside}");
    }
}

#[test]
fn gibbs_shows_no_drift_from_a_stationary_start() {
    let case = synthetic_case(50, Link::Probit, PriorKind::Gaussian, 10);
    let q = laplace(&case.target).unwrap();
    let warm = rwmh(&case.target, &q, &RwmhOptions::new(50_000), 2).unwrap();
    let mut options = GibbsOptions::new(40_000);
    options.burn_in = Some(0);
    options.init = Some(warm.states.row(warm.len() - 1).transpose());
    let trace = gibbs_probit(&case.target, &options, 12).unwrap();
    let half = trace.len() / 2;
    for j in 0..2 {
        let col: Vec<f64> = trace.states.column(j).iter().copied().collect();
        let (a, b) = col.split_at(half);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let z = (mean(a) - mean(b)) / (batch_means_se(a, 25).powi(2) + batch_means_se(b, 25).powi(2)).sqrt();
        assert!(z.abs() < 2.576, "component {j}: z = {z}");
    }
}

#[test]
fn hmc_acceptance_tracks_the_target_rate() {
    for p in [8, 60] {
        let (t, q) = gaussian_target(p);
        let trace = hmc(&t, &q, &HmcOptions::new(5_000), 1).unwrap();
        assert!((trace.acceptance_rate - 0.65).abs() <= 0.08, "p = {p}: {}", trace.acceptance_rate);
    }
}

#[test]
fn hmc_recovers_a_gaussian_covariance() {
    let (t, q) = gaussian_target(3);
    let trace = hmc(&t, &q, &HmcOptions::new(100_000), 2).unwrap();
    let c = trace.covariance();
    let rel: DMatrix<f64> = DMatrix::from_fn(3, 3, |i, j| (c[(i, j)] - q.covariance()[(i, j)]) / (q.sd(i) * q.sd(j)));
    assert!(rel.amax() < 0.05, "{rel}");
}

#[test]
fn hmc_means_match_quadrature() {
    let case = synthetic_case(60, Link::Probit, PriorKind::Cauchy, 11);
    let grid = oracle::posterior_by_quadrature(&case.problem, 401);
    let q = laplace(&case.target).unwrap();
    let trace = hmc(&case.target, &q, &HmcOptions::new(50_000), 13).unwrap();
    within_se(&trace, &grid.mean, 3.0);
}

#[test]
fn samplers_are_reproducible() {
    let case = synthetic_case(30, Link::Probit, PriorKind::Gaussian, 12);
    let q = laplace(&case.target).unwrap();
    let a = rwmh(&case.target, &q, &RwmhOptions::new(500), 4).unwrap();
    let b = rwmh(&case.target, &q, &RwmhOptions::new(500), 4).unwrap();
    assert_eq!(a.states, b.states);
    let a = hmc(&case.target, &q, &HmcOptions::new(300), 4).unwrap();
    let b = hmc(&case.target, &q, &HmcOptions::new(300), 4).unwrap();
    assert_eq!(a.states, b.states);
    let a = gibbs_probit(&case.target, &GibbsOptions::new(300), 4).unwrap();
    let b = gibbs_probit(&case.target, &GibbsOptions::new(300), 4).unwrap();
    assert_eq!(a.states, b.states);
    let a = importance_sample(&q, &case.target, 1000, 4).unwrap();
    let b = importance_sample(&q, &case.target, 1000, 4).unwrap();
    assert_eq!(a.log_weights, b.log_weights);
}
