//! Brute-force numerical references used by the test suites.
//!
//! Everything here is deliberately naive: its own likelihood code, composite
//! Simpson rules on dense tensor grids, and direct integration of the normal
//! density. Nothing is shared with the library under test.

use statrs::function::erf::erfc;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Probit,
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// Independent normals with these standard deviations.
    Gaussian(Vec<f64>),
    /// Independent Cauchys with these scales.
    Cauchy(Vec<f64>),
}

/// Binary regression problem with labels in {-1, +1}; `x` holds rows.
#[derive(Debug, Clone)]
pub struct Problem {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub link: Link,
    pub prior: Prior,
}

fn ln_phi_cdf(t: f64) -> f64 {
    if t < -30.0 {
        // Asymptotic series; relative error below 1e-9 here.
        let t2 = t * t;
        -0.5 * t2 - 0.5 * LN_2PI - (-t).ln() + (1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2)).ln()
    } else {
        (0.5 * erfc(-t / std::f64::consts::SQRT_2)).ln()
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        match &self.prior {
            Prior::Gaussian(s) | Prior::Cauchy(s) => s.len(),
        }
    }

    pub fn log_prior(&self, beta: &[f64]) -> f64 {
        match &self.prior {
            Prior::Gaussian(sd) => beta
                .iter()
                .zip(sd)
                .map(|(b, s)| -0.5 * LN_2PI - s.ln() - 0.5 * (b / s) * (b / s))
                .sum(),
            Prior::Cauchy(sc) => beta
                .iter()
                .zip(sc)
                .map(|(b, s)| -(std::f64::consts::PI * s).ln() - (1.0 + (b / s) * (b / s)).ln())
                .sum(),
        }
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        self.y
            .iter()
            .zip(&self.x)
            .map(|(y, row)| {
                let t = y * row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
                match self.link {
                    Link::Probit => ln_phi_cdf(t),
                    Link::Logit => -(1.0 + (-t).exp()).ln(),
                }
            })
            .sum()
    }

    pub fn log_joint(&self, beta: &[f64]) -> f64 {
        self.log_prior(beta) + self.log_likelihood(beta)
    }
}

/// `log Φ(x)` by integrating the normal density below `x` directly:
/// `Φ(x) = φ(x) ∫_0^∞ exp(x s - s²/2) ds` for `x < 0`.
pub fn log_norm_cdf_by_integration(x: f64) -> f64 {
    assert!(x < 0.0);
    let upper = 60.0 / x.abs();
    let integral = simpson(|s| (x * s - 0.5 * s * s).exp(), 0.0, upper, 200_001);
    -0.5 * x * x - 0.5 * LN_2PI + integral.ln()
}

/// Composite Simpson rule with `m` (odd) nodes.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let m = if m % 2 == 0 { m + 1 } else { m };
    let h = (b - a) / (m - 1) as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m - 1 {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

fn simpson_weights(m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| {
            if k == 0 || k == m - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect()
}

/// Moments of a normalized density on a grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub log_evidence: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Per component: grid points and normalized marginal density.
    pub marginals: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Integrate `exp(log_f)` over the box `[lo, hi]` (p = 1 or 2) with `m`
/// Simpson nodes per axis.
pub fn tensor_grid(log_f: impl Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], m: usize) -> GridPosterior {
    let p = lo.len();
    assert!(p == 1 || p == 2, "tensor grid supports one or two dimensions");
    let m = if m % 2 == 0 { m + 1 } else { m };
    let axes: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..m).map(|k| lo[j] + (hi[j] - lo[j]) * k as f64 / (m - 1) as f64).collect())
        .collect();
    let h: Vec<f64> = (0..p).map(|j| (hi[j] - lo[j]) / (m - 1) as f64).collect();
    let w = simpson_weights(m);

    let total = if p == 1 { m } else { m * m };
    let mut logv = Vec::with_capacity(total);
    for idx in 0..total {
        let point: Vec<f64> = if p == 1 {
            vec![axes[0][idx]]
        } else {
            vec![axes[0][idx / m], axes[1][idx % m]]
        };
        logv.push(log_f(&point));
    }
    let max = logv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logv.iter().map(|v| (v - max).exp()).collect();

    let cell: f64 = h.iter().map(|v| v / 3.0).product();
    let weight = |idx: usize| -> f64 {
        if p == 1 {
            w[idx]
        } else {
            w[idx / m] * w[idx % m]
        }
    };
    let coord = |idx: usize, j: usize| -> f64 {
        if p == 1 {
            axes[0][idx]
        } else if j == 0 {
            axes[0][idx / m]
        } else {
            axes[1][idx % m]
        }
    };

    let z: f64 = (0..total).map(|i| weight(i) * dens[i]).sum::<f64>() * cell;
    let mut mean = vec![0.0; p];
    for (j, mj) in mean.iter_mut().enumerate() {
        *mj = (0..total).map(|i| weight(i) * dens[i] * coord(i, j)).sum::<f64>() * cell / z;
    }
    let mut cov = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            cov[a][b] = (0..total)
                .map(|i| weight(i) * dens[i] * (coord(i, a) - mean[a]) * (coord(i, b) - mean[b]))
                .sum::<f64>()
                * cell
                / z;
        }
    }

    let mut marginals = Vec::with_capacity(p);
    for j in 0..p {
        let mut md = vec![0.0; m];
        if p == 1 {
            md.iter_mut().zip(&dens).for_each(|(o, d)| *o = d / z);
        } else {
            let other = 1 - j;
            for (k, out) in md.iter_mut().enumerate() {
                let mut acc = 0.0;
                for l in 0..m {
                    let idx = if j == 0 { k * m + l } else { l * m + k };
                    acc += w[l] * dens[idx];
                }
                *out = acc * h[other] / 3.0 / z;
            }
        }
        marginals.push((axes[j].clone(), md));
    }

    GridPosterior {
        log_evidence: max + z.ln(),
        mean,
        cov,
        marginals,
    }
}

/// Locate the posterior mass on a coarse grid, then integrate on a fine one.
pub fn posterior_by_quadrature(problem: &Problem, m: usize) -> GridPosterior {
    let p = problem.dim();
    let f = |b: &[f64]| problem.log_joint(b);
    let mut lo = vec![-25.0; p];
    let mut hi = vec![25.0; p];
    for _ in 0..3 {
        let coarse = tensor_grid(f, &lo, &hi, 121);
        for j in 0..p {
            let sd = coarse.cov[j][j].sqrt();
            lo[j] = coarse.mean[j] - 12.0 * sd;
            hi[j] = coarse.mean[j] + 12.0 * sd;
        }
    }
    tensor_grid(f, &lo, &hi, m)
}

/// Gaussian integral `log ∫ exp(-½ βᵀQβ + rᵀβ) dβ` by brute force (p ≤ 2).
pub fn gaussian_log_partition_by_quadrature(r: &[f64], q: &[Vec<f64>]) -> f64 {
    let p = r.len();
    let log_f = |b: &[f64]| {
        let mut quad = 0.0;
        for a in 0..p {
            for c in 0..p {
                quad += b[a] * q[a][c] * b[c];
            }
        }
        -0.5 * quad + r.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    };
    let mut lo = vec![-60.0; p];
    let mut hi = vec![60.0; p];
    let coarse = tensor_grid(log_f, &lo, &hi, 241);
    for j in 0..p {
        let sd = coarse.cov[j][j].sqrt();
        lo[j] = coarse.mean[j] - 14.0 * sd;
        hi[j] = coarse.mean[j] + 14.0 * sd;
    }
    tensor_grid(log_f, &lo, &hi, 801).log_evidence
}

/// `(log Z, mean, variance)` of the 1-D tilted density
/// `F(y β x) N(β; μ, σ²)` by dense Simpson integration.
pub fn tilted_moments_1d(link: Link, y: f64, x: f64, mu: f64, sd: f64) -> (f64, f64, f64) {
    let lo = mu - 14.0 * sd;
    let hi = mu + 14.0 * sd;
    let log_f = |b: f64| {
        let t = y * b * x;
        let ll = match link {
            Link::Probit => ln_phi_cdf(t),
            Link::Logit => -(1.0 + (-t).exp()).ln(),
        };
        ll - 0.5 * ((b - mu) / sd).powi(2) - 0.5 * LN_2PI - sd.ln()
    };
    let m = 40_001;
    let z = simpson(|b| log_f(b).exp(), lo, hi, m);
    let mean = simpson(|b| b * log_f(b).exp(), lo, hi, m) / z;
    let var = simpson(|b| (b - mean).powi(2) * log_f(b).exp(), lo, hi, m) / z;
    (z.ln(), mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 11);
        assert!((v - 3.75).abs() < 1e-13);
    }

    #[test]
    fn tail_integral_matches_known_value() {
        // log Φ(-10) = -53.23128515051247 (reference value).
        let v = log_norm_cdf_by_integration(-10.0);
        assert!((v + 53.231_285_150_512_47).abs() < 1e-9, "{v}");
    }

    #[test]
    fn standard_gaussian_partition() {
        let v = gaussian_log_partition_by_quadrature(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((v - LN_2PI).abs() < 1e-9);
    }
}
