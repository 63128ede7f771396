//! Expectation propagation with rank-one Gaussian sites.
//!
//! Likelihood site `i` is stored by two scalars `(a_i, b_i)` acting on the
//! projection `t = y_i x_iᵀβ`: the site contributes `a_i s_i s_iᵀ` to the
//! global precision and `b_i s_i` to the shift, with `s_i = y_i x_i`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::GaussianApprox;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, symmetrize};
use crate::model::{Link, PosteriorTarget, PriorKind};
use crate::special::{cauchy_log_pdf, log_norm_cdf_derivatives, logsumexp, GaussHermite, LN_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone)]
pub struct EpOptions {
    pub schedule: Schedule,
    pub damping: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Gauss-Hermite nodes for logit and Cauchy-prior sites.
    pub quadrature_nodes: usize,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions {
            schedule: Schedule::Sequential,
            damping: 1.0,
            tol: 1e-6,
            max_sweeps: 200,
            quadrature_nodes: 64,
        }
    }
}

/// Natural parameters of one site along its projection and its log
/// normalizing constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EpSite {
    pub a: f64,
    pub b: f64,
    pub log_c: f64,
}

/// Which factor a site approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteIndex {
    Likelihood(usize),
    /// Cauchy prior factor of component `j`.
    Prior(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteUpdate {
    Updated,
    /// The cavity was not a proper Gaussian along the site direction.
    SkippedCavity,
    /// No damping level kept the global precision positive definite.
    SkippedDefinite,
    /// Site direction is zero; the factor is constant.
    Constant,
}

/// Moments of a tilted distribution `F(·) × cavity`.
#[derive(Debug, Clone)]
pub struct HybridMoments {
    pub log_z: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct EpState {
    pub sites: Vec<EpSite>,
    /// One site per component for the Cauchy prior; empty for the Gaussian prior.
    pub prior_sites: Vec<EpSite>,
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_evidence: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub skipped: usize,
    /// Fixed Gaussian prior precision (diagonal), zero for the Cauchy prior.
    prior_precision: DVector<f64>,
}

/// `log ∫ exp(-½ βᵀQβ + rᵀβ) dβ = (p/2) log 2π − ½ log|Q| + ½ rᵀQ⁻¹r`.
pub fn gaussian_log_partition(shift: &DVector<f64>, precision: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(precision, "precision")?;
    let sol = chol.solve(shift);
    Ok(0.5 * shift.len() as f64 * LN_2PI - 0.5 * log_det(&chol) + 0.5 * shift.dot(&sol))
}

fn log_partition_1d(nu: f64, tau: f64) -> f64 {
    0.5 * (2.0 * PI / tau).ln() + nu * nu / (2.0 * tau)
}

/// `(log Z, mean, variance)` of `exp(log_f(t)) N(t; m, v)`.
#[derive(Debug, Clone, Copy)]
struct Tilted {
    log_z: f64,
    mean: f64,
    var: f64,
}

fn probit_tilted(m: f64, v: f64) -> Tilted {
    let s = (1.0 + v).sqrt();
    let z = m / s;
    let (d1, d2) = log_norm_cdf_derivatives(z);
    Tilted {
        log_z: crate::special::log_norm_cdf(z),
        mean: m + v * d1 / s,
        var: v + v * v * d2 / (1.0 + v),
    }
}

/// Cavity variance, in units of the site's own length scale, above which
/// the Gauss-Hermite rule gives way to composite Gauss-Legendre panels.
const WIDE_CAVITY: f64 = 10.0;

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn moments_from_log_weights(points: &[f64], logw: &[f64], centre: f64) -> Tilted {
    let log_z = logsumexp(logw);
    let (mut offset, mut second) = (0.0, 0.0);
    for (x, l) in points.iter().zip(logw) {
        let p = (l - log_z).exp();
        offset += p * (x - centre);
        second += p * (x - centre) * (x - centre);
    }
    Tilted {
        log_z,
        mean: centre + offset,
        var: (second - offset * offset).max(0.0),
    }
}

/// Moments of `exp(site(t)) N(t; m, v)`.
///
/// `site` returns the log factor and its first two derivatives; `scale` is
/// the length over which the factor changes appreciably and `start` seeds
/// the mode search. Narrow cavities use a Gauss-Hermite rule recentred at
/// the mode of the tilted density; wide ones use 8-point Gauss-Legendre
/// panels, fine across the site's transition region and coarse elsewhere.
fn tilted_moments(site: impl Fn(f64) -> (f64, f64, f64), m: f64, v: f64, nodes: usize, scale: f64, start: f64) -> Tilted {
    let log_norm_cavity = -0.5 * (LN_2PI + v.ln());
    let g = |t: f64| {
        let (f, d1, d2) = site(t);
        (f - 0.5 * (t - m) * (t - m) / v, d1 - (t - m) / v, d2 - 1.0 / v)
    };
    if v > WIDE_CAVITY * scale * scale {
        let sd = v.sqrt();
        let (lo, hi) = (m - 13.0 * sd, m + 13.0 * sd);
        let (fine_lo, fine_hi) = (-30.0 * scale, 30.0 * scale);
        let mut points = Vec::new();
        let mut logw = Vec::new();
        let mut a = lo;
        while a < hi {
            let width = if a >= fine_lo && a < fine_hi { 0.5 * scale } else { 0.25 * sd };
            let mut b = a + width;
            if a < fine_lo && fine_lo < b {
                b = fine_lo;
            }
            if a < fine_hi && fine_hi < b {
                b = fine_hi;
            }
            let b = b.min(hi);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
                for t in [mid - half * x, mid + half * x] {
                    points.push(t);
                    logw.push((w * half).ln() + g(t).0 + log_norm_cavity);
                }
            }
            a = b;
        }
        return moments_from_log_weights(&points, &logw, m);
    }

    let mut t = start;
    for _ in 0..100 {
        let (_, d1, d2) = g(t);
        if d2 >= 0.0 || !d1.is_finite() {
            break;
        }
        let step = -d1 / d2;
        t += step;
        if step.abs() <= 1e-13 * (1.0 + t.abs()) {
            break;
        }
    }
    let curvature = g(t).2;
    let width = if curvature < 0.0 { (-1.0 / curvature).sqrt() } else { v.sqrt() };
    let rule = GaussHermite::new(nodes);
    let mut logw = Vec::with_capacity(rule.len());
    let mut points = Vec::with_capacity(rule.len());
    for (u, lw) in rule.nodes.iter().zip(&rule.log_weight_over_pdf) {
        let x = t + width * u;
        logw.push(lw + g(x).0 + width.ln() + log_norm_cavity);
        points.push(x);
    }
    moments_from_log_weights(&points, &logw, t)
}

fn likelihood_tilted(link: Link, m: f64, v: f64, nodes: usize) -> Tilted {
    match link {
        Link::Probit => probit_tilted(m, v),
        Link::Logit => tilted_moments(|t| link.log_cdf_derivatives(t), m, v, nodes, 1.0, m),
    }
}

fn cauchy_tilted(scale: f64, m: f64, v: f64, nodes: usize) -> Tilted {
    let s2 = scale * scale;
    let site = |t: f64| {
        let d = s2 + t * t;
        (cauchy_log_pdf(t, scale), -2.0 * t / d, -2.0 * (s2 - t * t) / (d * d))
    };
    // The product may be far from log-concave; seed the mode search from
    // the best point of a coarse scan covering both factors.
    let sd = v.sqrt();
    let lo = (m - 10.0 * sd).min(-10.0 * scale);
    let hi = (m + 10.0 * sd).max(10.0 * scale);
    let start = (0..=400)
        .map(|k| lo + (hi - lo) * k as f64 / 400.0)
        .map(|t| (t, site(t).0 - 0.5 * (t - m) * (t - m) / v))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
        .unwrap_or(m);
    tilted_moments(site, m, v, nodes, scale, start)
}

fn lift_moments(cavity: &GaussianApprox, s: &DVector<f64>, tilted: Tilted, m: f64, v: f64) -> HybridMoments {
    let u = cavity.covariance() * s;
    let mean = cavity.mean() + &u * ((tilted.mean - m) / v);
    let mut cov = cavity.covariance() - &u * u.transpose() * ((v - tilted.var) / (v * v));
    symmetrize(&mut cov);
    HybridMoments {
        log_z: tilted.log_z,
        mean,
        cov,
    }
}

fn site_moments(cavity: &GaussianApprox, y: f64, x: &DVector<f64>, link: Link, nodes: usize) -> Result<HybridMoments> {
    if cavity.dim() != x.len() {
        return Err(Error::InvalidArgument("covariate length does not match cavity".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(HybridMoments {
            log_z: 0.5f64.ln(),
            mean: cavity.mean().clone(),
            cov: cavity.covariance().clone(),
        });
    }
    let s = x * y;
    let v = s.dot(&(cavity.covariance() * &s));
    if !(v > 0.0) {
        return Err(Error::Numerical("cavity variance along the covariate is not positive".into()));
    }
    let m = s.dot(cavity.mean());
    let tilted = likelihood_tilted(link, m, v, nodes);
    Ok(lift_moments(cavity, &s, tilted, m, v))
}

/// Exact moments of `Φ(y xᵀβ) N(β; μ_c, Σ_c)`.
pub fn probit_site_moments(cavity: &GaussianApprox, y: f64, x: &DVector<f64>) -> Result<HybridMoments> {
    site_moments(cavity, y, x, Link::Probit, 64)
}

/// Moments of `L(y xᵀβ) N(β; μ_c, Σ_c)` by Gauss-Hermite quadrature on the projection.
pub fn logit_site_moments(cavity: &GaussianApprox, y: f64, x: &DVector<f64>, nodes: usize) -> Result<HybridMoments> {
    site_moments(cavity, y, x, Link::Logit, nodes)
}

/// Projection direction, cavity projection and tilted moments of a site,
/// computed from a frozen global state.
struct Proposal {
    a: f64,
    b: f64,
}

struct Ctx<'a> {
    target: &'a PosteriorTarget,
    options: &'a EpOptions,
}

impl Ctx<'_> {
    fn direction(&self, site: SiteIndex) -> DVector<f64> {
        match site {
            SiteIndex::Likelihood(i) => self.target.signed_design().row(i).transpose(),
            SiteIndex::Prior(j) => DVector::from_fn(self.target.dim(), |k, _| if k == j { 1.0 } else { 0.0 }),
        }
    }

    fn tilted(&self, site: SiteIndex, m: f64, v: f64) -> Tilted {
        match site {
            SiteIndex::Likelihood(_) => likelihood_tilted(self.target.link(), m, v, self.options.quadrature_nodes),
            SiteIndex::Prior(j) => cauchy_tilted(self.target.prior().scales[j], m, v, self.options.quadrature_nodes),
        }
    }

    /// Cavity `(τ_c, ν_c)` along the projection and the projected moments.
    fn cavity(&self, state: &EpState, site: SiteIndex, s: &DVector<f64>) -> Option<(f64, f64, f64, f64)> {
        let u = &state.cov * s;
        let sv = s.dot(&u);
        if !(sv > 0.0) {
            return None;
        }
        let m = s.dot(&state.mean);
        let cur = state.site(site);
        let tau = 1.0 / sv - cur.a;
        let nu = m / sv - cur.b;
        if !(tau > 1e-300) {
            return None;
        }
        Some((tau, nu, sv, m))
    }

    fn propose(&self, state: &EpState, site: SiteIndex) -> std::result::Result<Proposal, SiteUpdate> {
        let s = self.direction(site);
        if s.iter().all(|v| *v == 0.0) {
            return Err(SiteUpdate::Constant);
        }
        let (tau, nu, _, _) = self.cavity(state, site, &s).ok_or(SiteUpdate::SkippedCavity)?;
        let t = self.tilted(site, nu / tau, 1.0 / tau);
        if !(t.var > 0.0 && t.var.is_finite() && t.mean.is_finite()) {
            return Err(SiteUpdate::SkippedCavity);
        }
        Ok(Proposal {
            a: 1.0 / t.var - tau,
            b: t.mean / t.var - nu,
        })
    }

    fn log_c(&self, state: &EpState, site: SiteIndex) -> f64 {
        let s = self.direction(site);
        if s.iter().all(|v| *v == 0.0) {
            return 0.5f64.ln();
        }
        let cur = state.site(site);
        match self.cavity(state, site, &s) {
            Some((tau, nu, _, _)) => {
                let t = self.tilted(site, nu / tau, 1.0 / tau);
                t.log_z - (log_partition_1d(nu + cur.b, tau + cur.a) - log_partition_1d(nu, tau))
            }
            None => {
                log::warn!("improper cavity when computing the normalizer of {site:?}");
                f64::NAN
            }
        }
    }
}

impl EpState {
    fn site(&self, site: SiteIndex) -> EpSite {
        match site {
            SiteIndex::Likelihood(i) => self.sites[i],
            SiteIndex::Prior(j) => self.prior_sites[j],
        }
    }

    fn site_mut(&mut self, site: SiteIndex) -> &mut EpSite {
        match site {
            SiteIndex::Likelihood(i) => &mut self.sites[i],
            SiteIndex::Prior(j) => &mut self.prior_sites[j],
        }
    }

    pub fn approx(&self) -> Result<GaussianApprox> {
        GaussianApprox::from_natural(self.shift.clone(), self.precision.clone(), Some(self.log_evidence))
    }

    /// Recompute `(Q, r)` from the sites and refresh `(μ, Σ)` by Cholesky.
    fn rebuild(&mut self, target: &PosteriorTarget) -> Result<()> {
        let (q, r) = assemble(target, &self.prior_precision, &self.sites, &self.prior_sites);
        self.set_natural(q, r)
    }

    fn set_natural(&mut self, q: DMatrix<f64>, r: DVector<f64>) -> Result<()> {
        let chol = cholesky(&q, "EP global precision")?;
        self.mean = chol.solve(&r);
        let mut cov = chol.inverse();
        symmetrize(&mut cov);
        self.cov = cov;
        self.precision = q;
        self.shift = r;
        Ok(())
    }
}

fn assemble(
    target: &PosteriorTarget,
    prior_precision: &DVector<f64>,
    sites: &[EpSite],
    prior_sites: &[EpSite],
) -> (DMatrix<f64>, DVector<f64>) {
    let s = target.signed_design();
    let a = DVector::from_iterator(sites.len(), sites.iter().map(|e| e.a));
    let b = DVector::from_iterator(sites.len(), sites.iter().map(|e| e.b));
    let mut weighted = s.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= a[i];
    }
    let mut q = s.tr_mul(&weighted);
    let mut r = s.tr_mul(&b);
    for j in 0..target.dim() {
        q[(j, j)] += prior_precision[j];
        if let Some(e) = prior_sites.get(j) {
            q[(j, j)] += e.a;
            r[j] += e.b;
        }
    }
    symmetrize(&mut q);
    (q, r)
}

/// Initial state: likelihood sites at zero; the prior enters as the fixed
/// Gaussian factor, or (Cauchy) as updatable sites started at the Gaussian
/// with twice the Cauchy scale.
pub fn ep_init(target: &PosteriorTarget) -> Result<EpState> {
    let p = target.dim();
    let prior = target.prior();
    let (prior_precision, prior_sites) = match prior.kind {
        PriorKind::Gaussian => (
            DVector::from_fn(p, |j, _| 1.0 / prior.gaussian_sd(j).powi(2)),
            Vec::new(),
        ),
        PriorKind::Cauchy => (
            DVector::zeros(p),
            (0..p)
                .map(|j| EpSite {
                    a: 1.0 / prior.gaussian_sd(j).powi(2),
                    b: 0.0,
                    log_c: 0.0,
                })
                .collect(),
        ),
    };
    let mut state = EpState {
        sites: vec![EpSite::default(); target.n_obs()],
        prior_sites,
        precision: DMatrix::zeros(p, p),
        shift: DVector::zeros(p),
        mean: DVector::zeros(p),
        cov: DMatrix::zeros(p, p),
        log_evidence: f64::NAN,
        sweeps: 0,
        converged: false,
        skipped: 0,
        prior_precision,
    };
    state.rebuild(target)?;
    Ok(state)
}

/// Moment-match one site against the current global approximation, with a
/// rank-one update of `(μ, Σ, Q, r)`. Falls back to damping `d/2`, `d/4`
/// when the undamped update would lose positive definiteness.
pub fn ep_update_site(
    state: &mut EpState,
    target: &PosteriorTarget,
    site: SiteIndex,
    options: &EpOptions,
) -> SiteUpdate {
    let ctx = Ctx { target, options };
    let proposal = match ctx.propose(state, site) {
        Ok(p) => p,
        Err(outcome) => return outcome,
    };
    let s = ctx.direction(site);
    let u = &state.cov * &s;
    let sv = s.dot(&u);
    let m = s.dot(&state.mean);
    let cur = state.site(site);
    for k in 0..3 {
        let d = options.damping / f64::powi(2.0, k);
        let da = d * (proposal.a - cur.a);
        let db = d * (proposal.b - cur.b);
        let denom = 1.0 + da * sv;
        if !(denom > 1e-12) {
            continue;
        }
        let c = da / denom;
        state.cov -= &u * u.transpose() * c;
        symmetrize(&mut state.cov);
        state.mean += &u * ((db - da * m) / denom);
        state.precision += &s * s.transpose() * da;
        state.shift += &s * db;
        let e = state.site_mut(site);
        e.a += da;
        e.b += db;
        return SiteUpdate::Updated;
    }
    SiteUpdate::SkippedDefinite
}

/// Fill in every site normalizer and the evidence estimate.
fn finalize_evidence(state: &mut EpState, target: &PosteriorTarget, options: &EpOptions) -> Result<()> {
    let ctx = Ctx { target, options };
    let n = state.sites.len();
    let snapshot = state.clone();
    let log_cs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| ctx.log_c(&snapshot, SiteIndex::Likelihood(i)))
        .collect();
    for (e, c) in state.sites.iter_mut().zip(log_cs) {
        e.log_c = c;
    }
    for j in 0..state.prior_sites.len() {
        state.prior_sites[j].log_c = ctx.log_c(&snapshot, SiteIndex::Prior(j));
    }
    let mut log_z: f64 = state.sites.iter().map(|e| e.log_c).sum::<f64>()
        + state.prior_sites.iter().map(|e| e.log_c).sum::<f64>()
        + gaussian_log_partition(&state.shift, &state.precision)?;
    if state.prior_sites.is_empty() {
        let q0 = DMatrix::from_diagonal(&state.prior_precision);
        log_z -= gaussian_log_partition(&DVector::zeros(target.dim()), &q0)?;
    }
    state.log_evidence = log_z;
    Ok(())
}

fn sweep_sequential(state: &mut EpState, target: &PosteriorTarget, options: &EpOptions) {
    let first_sweep = state.sweeps == 0;
    for j in 0..state.prior_sites.len() {
        match ep_update_site(state, target, SiteIndex::Prior(j), options) {
            SiteUpdate::SkippedCavity if first_sweep => {}
            SiteUpdate::SkippedCavity | SiteUpdate::SkippedDefinite => state.skipped += 1,
            _ => {}
        }
    }
    for i in 0..state.sites.len() {
        if let SiteUpdate::SkippedCavity | SiteUpdate::SkippedDefinite =
            ep_update_site(state, target, SiteIndex::Likelihood(i), options)
        {
            state.skipped += 1;
        }
    }
}

fn sweep_parallel(state: &mut EpState, target: &PosteriorTarget, options: &EpOptions, damping: &mut f64) -> Result<()> {
    let ctx = Ctx { target, options };
    let n = state.sites.len();
    let frozen = &*state;
    let lik: Vec<Option<Proposal>> = (0..n)
        .into_par_iter()
        .map(|i| ctx.propose(frozen, SiteIndex::Likelihood(i)).ok())
        .collect();
    let pri: Vec<Option<Proposal>> = (0..state.prior_sites.len())
        .map(|j| ctx.propose(frozen, SiteIndex::Prior(j)).ok())
        .collect();
    state.skipped += lik.iter().filter(|p| p.is_none()).count();
    loop {
        let d = *damping;
        let blend = |cur: &[EpSite], new: &[Option<Proposal>]| -> Vec<EpSite> {
            cur.iter()
                .zip(new)
                .map(|(e, p)| match p {
                    Some(p) => EpSite {
                        a: e.a + d * (p.a - e.a),
                        b: e.b + d * (p.b - e.b),
                        log_c: e.log_c,
                    },
                    None => *e,
                })
                .collect()
        };
        let sites = blend(&state.sites, &lik);
        let prior_sites = blend(&state.prior_sites, &pri);
        let (q, r) = assemble(target, &state.prior_precision, &sites, &prior_sites);
        if cholesky(&q, "EP global precision").is_ok() {
            state.sites = sites;
            state.prior_sites = prior_sites;
            return state.set_natural(q, r);
        }
        if *damping <= 0.05 {
            state.skipped += n;
            log::warn!("parallel EP: global precision not positive definite even at damping {d}");
            return Ok(());
        }
        *damping = (*damping * 0.5).max(0.05);
    }
}

/// Fit EP, returning the global Gaussian (with evidence estimate) and the state.
pub fn ep_fit(target: &PosteriorTarget, options: &EpOptions) -> Result<(GaussianApprox, EpState)> {
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
    }
    let mut state = ep_init(target)?;
    let mut damping = options.damping;
    let mut last_change = f64::INFINITY;
    while state.sweeps < options.max_sweeps {
        let prev_mean = state.mean.clone();
        let prev_var = state.cov.diagonal();
        match options.schedule {
            Schedule::Sequential => {
                sweep_sequential(&mut state, target, options);
                state.rebuild(target)?;
            }
            Schedule::Parallel => sweep_parallel(&mut state, target, options, &mut damping)?,
        }
        state.sweeps += 1;
        let change = (&state.mean - &prev_mean)
            .amax()
            .max((state.cov.diagonal() - prev_var).amax());
        if !change.is_finite() {
            return Err(Error::Numerical("EP produced non-finite moments".into()));
        }
        if change < options.tol {
            state.converged = true;
            break;
        }
        if options.schedule == Schedule::Parallel {
            damping = if change > last_change {
                (damping * 0.5).max(0.05)
            } else {
                (damping * 1.5).min(options.damping)
            };
        }
        last_change = change;
    }
    if !state.converged {
        log::warn!("EP did not converge within {} sweeps", options.max_sweeps);
    }
    if state.skipped > 0 {
        log::debug!("EP skipped {} site updates", state.skipped);
    }
    finalize_evidence(&mut state, target, options)?;
    let approx = state.approx()?;
    Ok((approx, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthetic_dataset, Dataset, Prior};
    use approx::assert_relative_eq;
    use binreg_oracle as oracle;

    #[test]
    fn log_partition_closed_forms() {
        let v = gaussian_log_partition(&DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(v, LN_2PI, max_relative = 1e-15);
        let v = gaussian_log_partition(&DVector::from_element(1, 0.7), &DMatrix::from_element(1, 1, 2.5)).unwrap();
        assert_relative_eq!(v, log_partition_1d(0.7, 2.5), max_relative = 1e-15);
        assert!(gaussian_log_partition(&DVector::zeros(1), &DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn log_partition_matches_brute_force() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.8]);
        let r = DVector::from_vec(vec![0.4, -1.1]);
        let brute = oracle::gaussian_log_partition_by_quadrature(
            r.as_slice(),
            &[vec![2.0, 0.6], vec![0.6, 0.8]],
        );
        assert_relative_eq!(gaussian_log_partition(&r, &q).unwrap(), brute, max_relative = 1e-6);
    }

    #[test]
    fn probit_tilted_moments_match_quadrature() {
        for &(mu, sd, x, y) in &[(0.3, 1.2, 1.5, 1.0), (-2.0, 0.4, 0.7, 1.0), (1.0, 3.0, -2.0, -1.0), (-4.0, 0.5, 3.0, 1.0)] {
            let cavity = GaussianApprox::diagonal(&[mu], &[sd]).unwrap();
            let h = probit_site_moments(&cavity, y, &DVector::from_element(1, x)).unwrap();
            let (lz, m, v) = oracle::tilted_moments_1d(oracle::Link::Probit, y, x, mu, sd);
            assert_relative_eq!(h.log_z, lz, max_relative = 1e-8);
            assert_relative_eq!(h.mean[0], m, max_relative = 1e-8);
            assert_relative_eq!(h.cov[(0, 0)], v, max_relative = 1e-8);
        }
    }

    #[test]
    fn logit_tilted_moments_match_quadrature() {
        for &(mu, sd, x, y) in &[(0.3, 1.2, 1.5, 1.0), (-2.0, 0.4, 0.7, 1.0), (1.0, 3.0, -2.0, -1.0), (0.0, 20.0, 1.0, 1.0), (-3.0, 7.0, 1.4, 1.0)] {
            let cavity = GaussianApprox::diagonal(&[mu], &[sd]).unwrap();
            let h = logit_site_moments(&cavity, y, &DVector::from_element(1, x), 64).unwrap();
            let (lz, m, v) = oracle::tilted_moments_1d(oracle::Link::Logit, y, x, mu, sd);
            assert_relative_eq!(h.log_z, lz, max_relative = 1e-8);
            assert_relative_eq!(h.mean[0], m, max_relative = 1e-8, epsilon = 1e-10);
            assert_relative_eq!(h.cov[(0, 0)], v, max_relative = 1e-8);
        }
    }

    #[test]
    fn zero_covariate_site_is_constant() {
        let cavity = GaussianApprox::diagonal(&[0.5, -1.0], &[1.0, 2.0]).unwrap();
        for h in [
            probit_site_moments(&cavity, 1.0, &DVector::zeros(2)).unwrap(),
            logit_site_moments(&cavity, -1.0, &DVector::zeros(2), 64).unwrap(),
        ] {
            assert_relative_eq!(h.log_z, 0.5f64.ln());
            assert_eq!(&h.mean, cavity.mean());
            assert_eq!(&h.cov, cavity.covariance());
        }
    }

    #[test]
    fn label_flip_symmetry() {
        let x = DVector::from_vec(vec![0.8, -0.3]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let mu = DVector::from_vec(vec![0.4, 0.9]);
        let a = GaussianApprox::from_moments(mu.clone(), cov.clone(), None).unwrap();
        let b = GaussianApprox::from_moments(-mu, cov, None).unwrap();
        let ha = probit_site_moments(&a, 1.0, &x).unwrap();
        let hb = probit_site_moments(&b, -1.0, &x).unwrap();
        assert_relative_eq!(ha.log_z, hb.log_z, max_relative = 1e-14);
        assert_relative_eq!(ha.mean, -hb.mean, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_orders_agree() {
        for (k, &(mu, sd, x)) in [(0.2, 0.8, 1.0), (-1.5, 2.0, 0.6), (3.0, 0.3, -1.4)].iter().enumerate() {
            let cavity = GaussianApprox::diagonal(&[mu], &[sd]).unwrap();
            let y = if k % 2 == 0 { 1.0 } else { -1.0 };
            let a = logit_site_moments(&cavity, y, &DVector::from_element(1, x), 64).unwrap();
            let b = logit_site_moments(&cavity, y, &DVector::from_element(1, x), 256).unwrap();
            assert!((a.log_z - b.log_z).abs() < 1e-10);
            assert!((a.mean[0] - b.mean[0]).abs() < 1e-10);
            assert!((a.cov[(0, 0)] - b.cov[(0, 0)]).abs() < 1e-10);
        }
    }

    fn one_point(link: Link) -> PosteriorTarget {
        let data = Dataset::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 1.3),
            vec!["x".into()],
            false,
        )
        .unwrap();
        PosteriorTarget::new(&data, Prior::gaussian_with_sd(&[1.7]).unwrap(), link).unwrap()
    }

    #[test]
    fn single_site_is_exact() {
        for link in [Link::Probit, Link::Logit] {
            let t = one_point(link);
            let mut state = ep_init(&t).unwrap();
            let opts = EpOptions::default();
            assert_eq!(ep_update_site(&mut state, &t, SiteIndex::Likelihood(0), &opts), SiteUpdate::Updated);
            let olink = if link == Link::Probit { oracle::Link::Probit } else { oracle::Link::Logit };
            let (lz, m, v) = oracle::tilted_moments_1d(olink, 1.0, 1.3, 0.0, 1.7);
            assert_relative_eq!(state.mean[0], m, max_relative = 1e-8);
            assert_relative_eq!(state.cov[(0, 0)], v, max_relative = 1e-8);
            let (g, _) = ep_fit(&t, &opts).unwrap();
            assert_relative_eq!(g.log_evidence.unwrap(), lz, max_relative = 1e-8);
        }
    }

    #[test]
    fn repeated_update_is_a_fixed_point() {
        let data = synthetic_dataset(30, &[0.2, 1.0, -0.5], Link::Probit, 4);
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 3, true), Link::Probit).unwrap();
        let opts = EpOptions::default();
        let (_, mut state) = ep_fit(&t, &opts).unwrap();
        ep_update_site(&mut state, &t, SiteIndex::Likelihood(3), &opts);
        let before = state.clone();
        ep_update_site(&mut state, &t, SiteIndex::Likelihood(3), &opts);
        assert_relative_eq!(state.mean, before.mean, epsilon = 1e-10);
        assert_relative_eq!(state.cov, before.cov, epsilon = 1e-10);
    }

    #[test]
    fn update_matches_hybrid_moments() {
        let data = synthetic_dataset(25, &[0.0, 1.2], Link::Logit, 8);
        let t = PosteriorTarget::new(&data, Prior::default_for(PriorKind::Gaussian, 2, true), Link::Logit).unwrap();
        let opts = EpOptions { max_sweeps: 2, ..Default::default() };
        let (_, mut state) = ep_fit(&t, &opts).unwrap();
        let i = 5;
        let s = t.signed_design().row(i).transpose();
        let site = state.sites[i];
        let cav_q = &state.precision - &s * s.transpose() * site.a;
        let cav_r = &state.shift - &s * site.b;
        let cavity = GaussianApprox::from_natural(cav_r, cav_q, None).unwrap();
        let h = logit_site_moments(&cavity, 1.0, &s, 64).unwrap();
        ep_update_site(&mut state, &t, SiteIndex::Likelihood(i), &opts);
        assert_relative_eq!(state.mean, h.mean, epsilon = 1e-8);
        assert_relative_eq!(state.cov, h.cov, epsilon = 1e-8);
    }

    #[test]
    fn no_data_gives_prior_and_zero_evidence() {
        let t = PosteriorTarget::prior_only(Prior::default_for(PriorKind::Gaussian, 2, true), Link::Probit);
        let (g, state) = ep_fit(&t, &EpOptions::default()).unwrap();
        assert!(state.converged);
        assert_relative_eq!(g.log_evidence.unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.sd(0), 20.0, max_relative = 1e-12);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let data = synthetic_dataset(120, &[0.3, 1.0, -0.7, 0.4], Link::Logit, 6);
        for kind in [PriorKind::Gaussian, PriorKind::Cauchy] {
            let t = PosteriorTarget::new(&data, Prior::default_for(kind, 4, true), Link::Logit).unwrap();
            let (a, sa) = ep_fit(&t, &EpOptions { tol: 1e-9, ..Default::default() }).unwrap();
            let (b, sb) = ep_fit(
                &t,
                &EpOptions {
                    schedule: Schedule::Parallel,
                    tol: 1e-9,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(sa.converged && sb.converged);
            assert!((a.mean() - b.mean()).amax() < 1e-4);
            assert!((a.log_evidence.unwrap() - b.log_evidence.unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn permutation_invariance() {
        let data = synthetic_dataset(60, &[0.1, 0.8, -1.0], Link::Probit, 2);
        let perm: Vec<usize> = (0..60).rev().collect();
        let mut shuffled = data.clone();
        shuffled.x = data.x.select_rows(&perm);
        shuffled.y = data.y.select_rows(&perm);
        let prior = Prior::default_for(PriorKind::Gaussian, 3, true);
        let opts = EpOptions { tol: 1e-10, ..Default::default() };
        let (a, _) = ep_fit(&PosteriorTarget::new(&data, prior.clone(), Link::Probit).unwrap(), &opts).unwrap();
        let (b, _) = ep_fit(&PosteriorTarget::new(&shuffled, prior, Link::Probit).unwrap(), &opts).unwrap();
        assert!((a.mean() - b.mean()).amax() < 1e-8);
        assert!((a.covariance() - b.covariance()).amax() < 1e-8);
        assert!((a.log_evidence.unwrap() - b.log_evidence.unwrap()).abs() < 1e-8);
    }
}
