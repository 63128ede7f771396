mod common;

use binreg::model::{synthetic_dataset, Dataset, Link, Prior, PriorKind, PosteriorTarget};
use binreg::varsel::{
    binary_smc_varsel, enumerate_varsel, gamma_gibbs, model_evidence, EvidenceMethod, ModelIndicator,
    VarselSmcOptions,
};
use binreg_oracle as oracle;
use common::case_from;
use nalgebra::DMatrix;

/// Intercept plus covariates with effects `beta[1..]`, then `extra` noise columns.
fn selection_data(n: usize, beta: &[f64], extra: usize, seed: u64) -> Dataset {
    let mut coefs = beta.to_vec();
    coefs.extend(std::iter::repeat_n(0.0, extra));
    synthetic_dataset(n, &coefs, Link::Probit, seed)
}

fn without_intercept(data: &Dataset) -> Dataset {
    let cols: Vec<usize> = (1..data.dim()).collect();
    let x = data.x.select_columns(&cols);
    Dataset::new(data.y.clone(), x, data.column_names[1..].to_vec(), false).unwrap()
}

#[test]
fn no_observations_means_zero_evidence() {
    let t = PosteriorTarget::prior_only(Prior::default_for(PriorKind::Gaussian, 3, false), Link::Logit);
    for i in 0..8 {
        let g = ModelIndicator::from_index(i, 3);
        for method in [EvidenceMethod::Laplace, EvidenceMethod::Ep, EvidenceMethod::Is(256)] {
            let v = model_evidence(&g, &t, method, 1).unwrap();
            assert!(v.abs() < 1e-9, "{g} {method}: {v}");
        }
    }
    let e = enumerate_varsel(&t, EvidenceMethod::Laplace, 0).unwrap();
    for w in &e.posterior {
        assert!((w - 0.125).abs() < 1e-12);
    }
    for pi in &e.inclusion {
        assert!((pi - 0.5).abs() < 1e-12);
    }
}

#[test]
fn importance_evidence_matches_restricted_quadrature() {
    let data = without_intercept(&selection_data(60, &[0.0, 1.0, -0.6], 0, 31));
    let full = case_from(data.clone(), Link::Probit, PriorKind::Gaussian);
    for i in 0..4u64 {
        let g = ModelIndicator::from_index(i, 2);
        let cols = g.columns(&full.target);
        let truth = if cols.is_empty() {
            -(data.n_obs() as f64) * std::f64::consts::LN_2
        } else {
            let sub = case_from(data.select_columns(&cols), Link::Probit, PriorKind::Gaussian);
            oracle::posterior_by_quadrature(&sub.problem, 401).log_evidence
        };
        // spread of independent estimates gives the standard error
        let est: Vec<f64> = (0..20)
            .map(|s| model_evidence(&g, &full.target, EvidenceMethod::Is(4096), s).unwrap())
            .collect();
        let first = est[0];
        let m = est.iter().sum::<f64>() / 20.0;
        let sd = (est.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 19.0).sqrt();
        assert!((first - truth).abs() <= 3.0 * sd + 1e-9, "{g}: {first} vs {truth} (se {sd})");
    }
}

#[test]
fn enumeration_finds_the_signal_column() {
    let data = selection_data(300, &[0.2, 1.0], 1, 32);
    let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 3, true), Link::Probit).unwrap();
    let e = enumerate_varsel(&t, EvidenceMethod::Laplace, 0).unwrap();
    assert!(e.inclusion[0] > 0.95, "{:?}", e.inclusion);
    assert!(e.inclusion[1] < 0.5, "{:?}", e.inclusion);
    assert_eq!(e.top(1)[0].0, ModelIndicator(vec![true, false]));
    // an irrelevant column moves the evidence by O(1)
    let with = model_evidence(&ModelIndicator(vec![true, true]), &t, EvidenceMethod::Laplace, 0).unwrap();
    let without = model_evidence(&ModelIndicator(vec![true, false]), &t, EvidenceMethod::Laplace, 0).unwrap();
    assert!((with - without).abs() < 10.0, "{with} vs {without}");
}

#[test]
fn duplicated_columns_are_exchangeable() {
    let data = selection_data(150, &[0.0, 0.8, 0.3], 0, 33);
    let x = DMatrix::from_fn(data.n_obs(), 4, |i, j| data.x[(i, if j == 3 { 2 } else { j })]);
    let mut names = data.column_names.clone();
    names.push("copy".into());
    let dup = Dataset::new(data.y.clone(), x, names, true).unwrap();
    let t = PosteriorTarget::new(&dup, Prior::default_for(PriorKind::Gaussian, 4, true), Link::Logit).unwrap();
    let e = enumerate_varsel(&t, EvidenceMethod::Laplace, 0).unwrap();
    assert!((e.inclusion[1] - e.inclusion[2]).abs() < 1e-8, "{:?}", e.inclusion);
}

#[test]
fn enumeration_refuses_large_model_spaces() {
    let t = PosteriorTarget::prior_only(Prior::default_for(PriorKind::Gaussian, 21, false), Link::Probit);
    assert!(matches!(enumerate_varsel(&t, EvidenceMethod::Laplace, 0), Err(binreg::Error::Config(_))));
}

#[test]
fn initial_particles_are_uniform_over_models() {
    let p = 12;
    let n = 4000;
    let t = PosteriorTarget::prior_only(Prior::default_for(PriorKind::Gaussian, p, false), Link::Probit);
    let ps = binary_smc_varsel(&t, &VarselSmcOptions::new(n, EvidenceMethod::Laplace), 5).unwrap();
    assert_eq!(ps.ladder, vec![1.0]);
    let chi2: f64 = (0..p)
        .map(|j| {
            let m = ps.particles.iter().filter(|g| g.0[j]).count() as f64 / n as f64;
            (m - 0.5).powi(2) * 4.0 * n as f64
        })
        .sum();
    // 99% quantile of chi-squared with 12 degrees of freedom
    assert!(chi2 < 26.217, "chi2 = {chi2}");
}

#[test]
fn smc_inclusion_matches_enumeration() {
    let data = selection_data(100, &[0.1, 0.9, -0.5, 0.3], 5, 34);
    let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 9, true), Link::Probit).unwrap();
    let exact = enumerate_varsel(&t, EvidenceMethod::Is(8192), 1).unwrap();
    let mut diffs = Vec::new();
    for seed in 0..10 {
        let ps = binary_smc_varsel(&t, &VarselSmcOptions::new(400, EvidenceMethod::Is(256)), 100 + seed).unwrap();
        for (a, b) in ps.inclusion_probabilities().iter().zip(&exact.inclusion) {
            diffs.push((a - b).abs());
        }
    }
    diffs.sort_by(f64::total_cmp);
    let median = diffs[diffs.len() / 2];
    assert!(median <= 0.03, "median deviation {median}");
}

#[test]
fn evidence_is_recomputed_only_for_proposals() {
    let data = selection_data(80, &[0.0, 1.0, 0.0, -0.7], 2, 35);
    let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 6, true), Link::Logit).unwrap();
    let options = VarselSmcOptions::new(200, EvidenceMethod::Is(128));
    let ps = binary_smc_varsel(&t, &options, 6).unwrap();
    let moving_stages = ps.stages.len() as u64 - 1;
    assert_eq!(ps.evaluations, 200 + 200 * 3 * moving_stages);
    assert_eq!(ps.audit.len() as u64, ps.evaluations);
    let mut keys: Vec<_> = ps.audit.iter().map(|r| (r.stage, r.particle, r.step)).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), ps.audit.len());

    let again = binary_smc_varsel(&t, &options, 6).unwrap();
    assert_eq!(again.particles, ps.particles);
    assert_eq!(again.log_evidence, ps.log_evidence);
}

#[test]
fn gibbs_baseline_spends_its_budget() {
    let data = selection_data(80, &[0.0, 1.0, 0.0], 1, 36);
    let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 4, true), Link::Probit).unwrap();
    let r = gamma_gibbs(&t, EvidenceMethod::Laplace, 3000, 2).unwrap();
    assert_eq!(r.evaluations, 3000);
    let e = enumerate_varsel(&t, EvidenceMethod::Laplace, 0).unwrap();
    for (a, b) in r.inclusion.iter().zip(&e.inclusion) {
        assert!((a - b).abs() < 0.08, "{:?} vs {:?}", r.inclusion, e.inclusion);
    }
}
