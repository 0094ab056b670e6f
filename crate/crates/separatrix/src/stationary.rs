//! Closed-form stationary density of the 1D reduced model and the
//! expectation-centred stochastic bifurcation diagram.
//!
//! With reflecting boundaries the reduced SDE du = f(u;b1)dt + σ√(u+δ)dW has
//! the zero-flux stationary density
//!
//! ```text
//! p(u) ∝ (1/(u+δ)) · exp( ∫₀ᵘ 2 f(z;b1) / (σ²(z+δ)) dz ),
//! ```
//!
//! evaluated in log space to avoid overflow and normalized by the trapezoid
//! rule. The reduction is used only for the bifurcation diagram; committor
//! and MFPT work stays in the full 2D model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_domain_2d, find_equilibria, ModelParams, Reduced1DModel, Stability};

/// Normalized 1D density with its CDF on a uniform grid over [0, u_max].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Density1D {
    pub u_grid: Vec<f64>,
    pub p: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl Density1D {
    /// ∫ u p(u) du by the trapezoid rule.
    pub fn mean(&self) -> f64 {
        trapz(&self.u_grid, |k| self.u_grid[k] * self.p[k])
    }

    /// Quantile by monotone linear interpolation of the CDF.
    pub fn quantile(&self, prob: f64) -> f64 {
        assert!((0.0..=1.0).contains(&prob));
        let k = match self.cdf.iter().position(|&c| c >= prob) {
            Some(k) => k,
            None => return *self.u_grid.last().unwrap(),
        };
        if k == 0 {
            return self.u_grid[0];
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (prob - c0) / (c1 - c0) } else { 0.0 };
        self.u_grid[k - 1] + t * (self.u_grid[k] - self.u_grid[k - 1])
    }

    /// Indices of strict local maxima of p above `rel_floor`·max p.
    pub fn modes(&self, rel_floor: f64) -> Vec<usize> {
        let floor = rel_floor * self.p.iter().cloned().fold(0.0, f64::max);
        let n = self.p.len();
        (0..n)
            .filter(|&k| {
                self.p[k] >= floor
                    && (k == 0 || self.p[k] > self.p[k - 1])
                    && (k == n - 1 || self.p[k] > self.p[k + 1])
            })
            .collect()
    }

    /// p(u_max) / max p — small when the domain truncation is harmless.
    pub fn tail_ratio(&self) -> f64 {
        *self.p.last().unwrap() / self.p.iter().cloned().fold(f64::MIN, f64::max)
    }
}

fn trapz(x: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.len() - 1 {
        acc += 0.5 * (f(k) + f(k + 1)) * (x[k + 1] - x[k]);
    }
    acc
}

/// Normalize exp(log_p) on `u_grid` and build the CDF. Invariant under a
/// constant shift of `log_p`.
pub(crate) fn normalize_log_density(u_grid: &[f64], log_p: &[f64]) -> Result<Density1D> {
    if log_p.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite {
            node: log_p.iter().position(|v| v.is_nan() || *v == f64::INFINITY).unwrap(),
            context: "log stationary density".into(),
        });
    }
    let shift = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_p.iter().map(|&l| (l - shift).exp()).collect();
    let total = trapz(u_grid, |k| raw[k]);
    if !(total > 0.0) {
        return Err(Error::InsufficientData("zero total density mass".into()));
    }
    let p: Vec<f64> = raw.iter().map(|&v| v / total).collect();
    let mut cdf = vec![0.0; p.len()];
    for k in 1..p.len() {
        cdf[k] = cdf[k - 1] + 0.5 * (p[k - 1] + p[k]) * (u_grid[k] - u_grid[k - 1]);
    }
    let end = cdf[p.len() - 1];
    for c in &mut cdf {
        *c /= end;
    }
    Ok(Density1D { u_grid: u_grid.to_vec(), p, cdf })
}

/// Stationary density for an arbitrary reduced drift `f` with diffusion
/// σ√(u+δ): the exponent ∫ 2f/(σ²(z+δ)) dz is accumulated by the cumulative
/// trapezoid rule.
pub fn density_from_drift(
    f: impl Fn(f64) -> f64,
    delta: f64,
    sigma: f64,
    u_max: f64,
    n: usize,
) -> Result<Density1D> {
    assert!(n >= 3 && u_max > 0.0 && sigma > 0.0 && delta > 0.0);
    let u_grid: Vec<f64> = (0..n).map(|k| u_max * k as f64 / (n - 1) as f64).collect();
    let integrand: Vec<f64> =
        u_grid.iter().map(|&u| 2.0 * f(u) / (sigma * sigma * (u + delta))).collect();
    let mut log_p = vec![0.0; n];
    let mut acc = 0.0;
    for k in 1..n {
        acc += 0.5 * (integrand[k - 1] + integrand[k]) * (u_grid[k] - u_grid[k - 1]);
        log_p[k] = acc;
    }
    for k in 0..n {
        log_p[k] -= (u_grid[k] + delta).ln();
    }
    normalize_log_density(&u_grid, &log_p)
}

/// Stationary density of the quasi-steady reduction at `(b1, sigma)`.
///
/// ```
/// use separatrix::model::{reduce_1d, ModelParams};
/// use separatrix::stationary::{stationary_density_1d, DENSITY_NODES, DENSITY_U_MAX};
///
/// let reduced = reduce_1d(&ModelParams::default())?;
/// let d = stationary_density_1d(&reduced, 2.1, 0.01, DENSITY_U_MAX, DENSITY_NODES)?;
/// assert!((d.cdf.last().unwrap() - 1.0).abs() < 1e-10);
/// # Ok::<(), separatrix::Error>(())
/// ```
pub fn stationary_density_1d(
    reduced: &Reduced1DModel,
    b1: f64,
    sigma: f64,
    u_max: f64,
    n: usize,
) -> Result<Density1D> {
    density_from_drift(|u| reduced.f(u, b1), reduced.params.delta, sigma, u_max, n)
}

/// One deterministic branch point of the bifurcation diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    pub b1: f64,
    pub u: f64,
    pub stability: Stability,
}

/// Per-σ series of (ū, q10, q90) over the b1 grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaSeries {
    pub sigma: f64,
    pub ubar: Vec<f64>,
    pub q10: Vec<f64>,
    pub q90: Vec<f64>,
}

/// Expectation-centred stochastic bifurcation diagram with the deterministic
/// branches overlaid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub b1_grid: Vec<f64>,
    pub series: Vec<SigmaSeries>,
    pub branches: Vec<BranchPoint>,
}

/// Default density resolution and truncation matching the 2D domain.
pub const DENSITY_U_MAX: f64 = 0.13;
pub const DENSITY_NODES: usize = 4001;

/// Bifurcation diagram: for each (b1, σ), ū = ∫ u p du and the 10/90%
/// quantiles of the reduced stationary density; deterministic branches from
/// the 2D equilibrium finder.
pub fn bifurcation_curve(
    template: &ModelParams,
    b1_grid: &[f64],
    sigmas: &[f64],
) -> Result<BifurcationCurve> {
    assert!(!b1_grid.is_empty() && !sigmas.is_empty());
    let reduced = crate::model::reduce_1d(template)?;
    let mut series = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut ubar = Vec::with_capacity(b1_grid.len());
        let mut q10 = Vec::with_capacity(b1_grid.len());
        let mut q90 = Vec::with_capacity(b1_grid.len());
        for &b1 in b1_grid {
            let d = stationary_density_1d(&reduced, b1, sigma, DENSITY_U_MAX, DENSITY_NODES)?;
            ubar.push(d.mean());
            q10.push(d.quantile(0.10));
            q90.push(d.quantile(0.90));
        }
        series.push(SigmaSeries { sigma, ubar, q10, q90 });
    }
    let domain = default_domain_2d();
    let mut branches = Vec::new();
    for &b1 in b1_grid {
        let p = ModelParams { b1, ..*template };
        for eq in find_equilibria(&p, &domain, 1e-10).equilibria {
            branches.push(BranchPoint { b1, u: eq.state[1], stability: eq.stability });
        }
    }
    Ok(BifurcationCurve { b1_grid: b1_grid.to_vec(), series, branches })
}
