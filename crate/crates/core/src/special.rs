//! Scalar special functions: normal CDF and its logarithm in the far tails,
//! the logistic CDF, normal quantiles, and Gauss-Hermite rules.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument log Φ switches from erfc to the Mills-ratio expansion.
const TAIL_SWITCH: f64 = -8.0;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn norm_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Mills ratio `(1 - Φ(t)) / φ(t)` for `t >= 8` by backward evaluation of the
/// continued fraction `1/(t + 1/(t + 2/(t + 3/(t + ...))))`.
fn mills_ratio_upper(t: f64) -> f64 {
    debug_assert!(t >= 7.0);
    let mut acc = t;
    for k in (1..=48).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `log Φ(x)`, accurate far into the lower tail.
#[inline]
pub fn log_norm_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        norm_log_pdf(x) + mills_ratio_upper(-x).ln()
    } else if x > 5.0 {
        // Φ close to one.
        (-norm_cdf(-x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Inverse Mills ratio `φ(x) / Φ(x)`, the first derivative of `log Φ`.
#[inline]
pub fn inv_mills(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        1.0 / mills_ratio_upper(-x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// First and second derivatives of `log Φ` at `x`.
#[inline]
pub fn log_norm_cdf_derivatives(x: f64) -> (f64, f64) {
    if x < TAIL_SWITCH {
        let t = -x;
        let m = mills_ratio_upper(t);
        let lambda = 1.0 / m;
        // x + λ = (1 - t m) / m, evaluated without subtracting two large numbers.
        let shifted = (1.0 - t * m) / m;
        (lambda, -lambda * shifted)
    } else {
        let lambda = norm_pdf(x) / norm_cdf(x);
        (lambda, -lambda * (x + lambda))
    }
}

/// Standard normal quantile.
#[inline]
pub fn norm_ppf(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// `log L(x)` with `L` the logistic CDF.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log((1/n) Σ exp(v))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    logsumexp(values) - (values.len() as f64).ln()
}

/// Efficiency factor `ESS / N` of unnormalized log-weights.
pub fn efficiency_factor(log_weights: &[f64]) -> f64 {
    if log_weights.is_empty() {
        return 0.0;
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / (s2 * log_weights.len() as f64)
}

/// Normalized weights `W_n = w_n / Σ w_m` from log-weights.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Gauss-Hermite rule for expectations under N(0, 1): nodes `t_k` and
/// weights `w_k` with `Σ w_k f(t_k) ≈ E f(Z)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `log(w_k / φ(t_k))`, for integrals against Lebesgue measure.
    pub log_weight_over_pdf: Vec<f64>,
}

impl GaussHermite {
    /// Cached rule with `n` nodes.
    pub fn new(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(build_rule(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Hermite functions `ψ_j(x) = He_j(x) φ(x)^{1/2} / sqrt(j!)` for `j = 0..=n`;
/// bounded, so the recurrence is stable far from the origin.
fn hermite_functions(x: f64, n: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n + 1);
    psi.push((-0.25 * x * x - 0.5 * LN_SQRT_2PI).exp());
    if n >= 1 {
        psi.push(x * psi[0]);
    }
    for j in 1..n {
        let next = (x * psi[j] - (j as f64).sqrt() * psi[j - 1]) / ((j + 1) as f64).sqrt();
        psi.push(next);
    }
    psi
}

fn build_rule(n: usize) -> GaussHermite {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    // Initial nodes from the Jacobi matrix, then Newton on ψ_n, weights from
    // the Christoffel function.
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let psi = hermite_functions(*x, n);
            // d/dx He_n / sqrt(n!) = sqrt(n) He_{n-1} / sqrt((n-1)!)
            let step = psi[n] / ((n as f64).sqrt() * psi[n - 1]);
            if step.is_finite() {
                *x -= step;
            }
        }
    }
    for k in 0..n / 2 {
        let j = n - 1 - k;
        let node = 0.5 * (nodes[j] - nodes[k]);
        nodes[k] = -node;
        nodes[j] = node;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let log_ratio: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let psi = hermite_functions(x, n - 1);
            -psi.iter().map(|v| v * v).sum::<f64>().ln()
        })
        .collect();
    let weights: Vec<f64> = nodes
        .iter()
        .zip(&log_ratio)
        .map(|(&x, l)| (l + norm_log_pdf(x)).exp())
        .collect();
    GaussHermite {
        nodes,
        weights,
        log_weight_over_pdf: log_ratio,
    }
}

/// Trapezoid rule for samples `y` at ordered abscissae `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Density of a Cauchy distribution centred at zero with scale `scale`.
#[inline]
pub fn cauchy_log_pdf(x: f64, scale: f64) -> f64 {
    -(PI * scale).ln() - (x * x / (scale * scale)).ln_1p()
}
