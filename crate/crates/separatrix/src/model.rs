//! Temperature–phytoplankton and Schlögl SDE systems.
//!
//! The 2D model couples an effective upper-ocean thermal state `T` to an
//! aggregate phytoplankton biomass `u`:
//!
//! ```text
//! dT = (1/γ)[−aT⁴ + b(1 − S(u))] dt + σ_T dW_T
//! du = u (g(T) − μ − u)          dt + σ_u √(u + δ) dW_u
//! S(u) = s0 + (s1 − s0) e^{−α₁ u},   g(T) = b₁ exp(−T₀/T − α₂ T)
//! ```
//!
//! interpreted in the Itô sense. For `T ≤ 0` the Arrhenius factor is defined
//! as `g(T) = 0`, removing the singularity at the origin; the physical domain
//! stays well away from it. The module also provides the quasi-steady 1D
//! reduction used for the stochastic bifurcation diagram and the cubic
//! Schlögl benchmark system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polyline;

/// Dimensionless model parameters. Defaults follow the reference parameter
/// set of the temperature–phytoplankton model with `b1 = 2.1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub s0: f64,
    pub s1: f64,
    pub alpha1: f64,
    pub t0: f64,
    pub alpha2: f64,
    pub gamma: f64,
    pub mu: f64,
    pub b1: f64,
    /// Diffusion regularisation in the biomass noise factor √(u + δ).
    pub delta: f64,
    pub sigma_t: f64,
    pub sigma_u: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            a: 1.0,
            b: 0.3,
            s0: 0.1,
            s1: 0.95,
            alpha1: 3.0,
            t0: 1.0,
            alpha2: 1.0,
            gamma: 1.0,
            mu: 0.1,
            b1: 2.1,
            delta: 1e-4,
            sigma_t: 0.01,
            sigma_u: 0.01,
        }
    }
}

impl ModelParams {
    pub fn with_b1_sigma(b1: f64, sigma: f64) -> Self {
        ModelParams { b1, sigma_t: sigma, sigma_u: sigma, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.a, self.b, self.s0, self.s1, self.alpha1, self.t0, self.alpha2, self.gamma,
            self.mu, self.b1, self.delta, self.sigma_t, self.sigma_u,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite model parameter".into()));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidParameter("delta must be > 0".into()));
        }
        if self.sigma_t < 0.0 || self.sigma_u < 0.0 {
            return Err(Error::InvalidParameter("noise intensities must be >= 0".into()));
        }
        if self.s0 >= self.s1 {
            return Err(Error::InvalidParameter("require s0 < s1".into()));
        }
        Ok(())
    }

    /// Radiative feedback S(u) = s0 + (s1 − s0) e^{−α₁ u}.
    #[inline]
    pub fn s_of_u(&self, u: f64) -> f64 {
        self.s0 + (self.s1 - self.s0) * (-self.alpha1 * u).exp()
    }

    /// Growth rate g(T) = b₁ exp(−T₀/T − α₂ T), with g ≡ 0 for T ≤ 0.
    #[inline]
    pub fn g_of_t(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.b1 * (-self.t0 / t - self.alpha2 * t).exp()
        }
    }

    /// Drift (F_T, F_u) of the deterministic skeleton.
    #[inline]
    pub fn drift(&self, t: f64, u: f64) -> [f64; 2] {
        let ft = (-self.a * t * t * t * t + self.b * (1.0 - self.s_of_u(u))) / self.gamma;
        let fu = u * (self.g_of_t(t) - self.mu - u);
        [ft, fu]
    }

    /// Analytic Jacobian of the drift, row-major [[∂F_T/∂T, ∂F_T/∂u], [...]].
    pub fn jacobian(&self, t: f64, u: f64) -> [[f64; 2]; 2] {
        let dft_dt = -4.0 * self.a * t * t * t / self.gamma;
        // S'(u) = −α₁ (s1 − s0) e^{−α₁ u}
        let s_prime = -self.alpha1 * (self.s1 - self.s0) * (-self.alpha1 * u).exp();
        let dft_du = -self.b * s_prime / self.gamma;
        let g = self.g_of_t(t);
        let g_prime = if t <= 0.0 { 0.0 } else { g * (self.t0 / (t * t) - self.alpha2) };
        let dfu_dt = u * g_prime;
        let dfu_du = g - self.mu - 2.0 * u;
        [[dft_dt, dft_du], [dfu_dt, dfu_du]]
    }
}

/// Axis-aligned bounding box of the computational domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l < h));
        DomainBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi)
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }
}

/// Default computational domain Ω = [0.30, 0.60] × [0, 0.13] for the 2D model.
pub fn default_domain_2d() -> DomainBox {
    DomainBox::new(vec![0.30, 0.0], vec![0.60, 0.13])
}

/// Concrete drift/diffusion definitions. Kept as an enum so the hot
/// simulation loop can dispatch without virtual calls and so systems can be
/// hashed for field caching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SdeKind {
    /// 2D temperature–phytoplankton model.
    Phyto(ModelParams),
    /// 1D Schlögl model: dx = −(x−x1)(x−x2)(x−x3) dt + σ dW.
    Schlogl { x1: f64, x2: f64, x3: f64, sigma: f64 },
    /// 1D linear drift λx with additive noise σ. Test/verification system.
    LinearDrift1D { lambda: f64, sigma: f64 },
}

/// Drift + diagonal noise-factor evaluators on a rectangular domain.
///
/// The Itô noise coefficient matrix is diagonal, `G = diag(g₁, …)`, and the
/// diffusion tensor is `a = G Gᵀ`. When both intensities are equal the tensor
/// is separable, `a = σ² ã`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSystem {
    pub kind: SdeKind,
    pub domain: DomainBox,
}

impl SdeSystem {
    pub fn phyto(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(SdeSystem { kind: SdeKind::Phyto(params), domain: default_domain_2d() })
    }

    pub fn phyto_with_domain(params: ModelParams, domain: DomainBox) -> Result<Self> {
        params.validate()?;
        assert_eq!(domain.dim(), 2);
        Ok(SdeSystem { kind: SdeKind::Phyto(params), domain })
    }

    /// Cubic bistable benchmark on [0, 1]. Roots must be strictly ordered.
    pub fn schlogl(x1: f64, x2: f64, x3: f64, sigma: f64) -> Result<Self> {
        if !(x1 < x2 && x2 < x3) {
            return Err(Error::InvalidParameter(format!(
                "schlogl roots must satisfy x1 < x2 < x3, got {x1}, {x2}, {x3}"
            )));
        }
        Ok(SdeSystem {
            kind: SdeKind::Schlogl { x1, x2, x3, sigma },
            domain: DomainBox::new(vec![0.0], vec![1.0]),
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Drift vector at `x`.
    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SdeKind::Phyto(p) => {
                let d = p.drift(x[0], x[1]);
                out[0] = d[0];
                out[1] = d[1];
            }
            SdeKind::Schlogl { x1, x2, x3, .. } => {
                out[0] = -(x[0] - x1) * (x[0] - x2) * (x[0] - x3);
            }
            SdeKind::LinearDrift1D { lambda, .. } => out[0] = lambda * x[0],
        }
    }

    /// Diagonal entries of the noise factor G at `x`.
    #[inline]
    pub fn noise_diag(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SdeKind::Phyto(p) => {
                out[0] = p.sigma_t;
                out[1] = p.sigma_u * (x[1] + p.delta).max(0.0).sqrt();
            }
            SdeKind::Schlogl { sigma, .. } | SdeKind::LinearDrift1D { sigma, .. } => {
                out[0] = *sigma;
            }
        }
    }

    /// Equal-intensity noise scale σ when the diffusion tensor is separable.
    pub fn separable_sigma(&self) -> Option<f64> {
        match &self.kind {
            SdeKind::Phyto(p) if p.sigma_t == p.sigma_u => Some(p.sigma_t),
            SdeKind::Schlogl { sigma, .. } | SdeKind::LinearDrift1D { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }
}

/// Stability classification from the Jacobian eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: [f64; 2],
    pub stability: Stability,
    /// Real parts of the Jacobian eigenvalues (complex pairs share one value).
    pub eigenvalues: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub equilibria: Vec<Equilibrium>,
    /// Set when the search found no roots at all.
    pub empty_warning: bool,
}

impl EquilibriumSet {
    pub fn stable(&self) -> Vec<&Equilibrium> {
        self.equilibria.iter().filter(|e| e.stability == Stability::Stable).collect()
    }

    pub fn saddle(&self) -> Option<&Equilibrium> {
        self.equilibria.iter().find(|e| e.stability == Stability::Saddle)
    }

    /// Background state: the stable equilibrium with the smallest u.
    pub fn background(&self) -> Option<&Equilibrium> {
        self.stable().into_iter().min_by(|a, b| a.state[1].total_cmp(&b.state[1]))
    }

    /// Bloom state: the stable equilibrium with the largest u.
    pub fn bloom(&self) -> Option<&Equilibrium> {
        self.stable().into_iter().max_by(|a, b| a.state[1].total_cmp(&b.state[1]))
    }
}

fn classify(jac: &[[f64; 2]; 2]) -> (Stability, [f64; 2]) {
    let tr = jac[0][0] + jac[1][1];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let disc = tr * tr / 4.0 - det;
    let eig = if disc >= 0.0 {
        let s = disc.sqrt();
        [tr / 2.0 - s, tr / 2.0 + s]
    } else {
        [tr / 2.0, tr / 2.0]
    };
    let stability = if det < 0.0 {
        Stability::Saddle
    } else if tr < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    (stability, eig)
}

const NEWTON_SEEDS_PER_AXIS: usize = 20;
const ROOT_DEDUPE_TOL: f64 = 1e-6;

/// Find all drift roots in `search_box` by damped Newton iteration from a
/// uniform seed lattice. Non-converging seeds are discarded.
pub fn find_equilibria(
    params: &ModelParams,
    search_box: &DomainBox,
    newton_tol: f64,
) -> EquilibriumSet {
    let mut roots: Vec<[f64; 2]> = Vec::new();
    let n = NEWTON_SEEDS_PER_AXIS;
    for i in 0..n {
        for j in 0..n {
            let t0 = search_box.lo[0]
                + search_box.extent(0) * (i as f64 + 0.5) / n as f64;
            let u0 = search_box.lo[1]
                + search_box.extent(1) * (j as f64 + 0.5) / n as f64;
            if let Some(root) = newton_2d(params, [t0, u0], newton_tol) {
                let margin = 1e-9;
                let inside = root[0] >= search_box.lo[0] - margin
                    && root[0] <= search_box.hi[0] + margin
                    && root[1] >= search_box.lo[1] - margin
                    && root[1] <= search_box.hi[1] + margin;
                if inside
                    && !roots.iter().any(|r| {
                        (r[0] - root[0]).abs() < ROOT_DEDUPE_TOL
                            && (r[1] - root[1]).abs() < ROOT_DEDUPE_TOL
                    })
                {
                    roots.push(root);
                }
            }
        }
    }
    roots.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
    let equilibria = roots
        .into_iter()
        .map(|state| {
            // snap the extinction branch onto u = 0 exactly
            let state = if state[1].abs() < ROOT_DEDUPE_TOL { [state[0], 0.0] } else { state };
            let jac = params.jacobian(state[0], state[1]);
            let (stability, eigenvalues) = classify(&jac);
            Equilibrium { state, stability, eigenvalues }
        })
        .collect::<Vec<_>>();
    let empty_warning = equilibria.is_empty();
    EquilibriumSet { equilibria, empty_warning }
}

fn newton_2d(params: &ModelParams, mut x: [f64; 2], tol: f64) -> Option<[f64; 2]> {
    for _ in 0..80 {
        let f = params.drift(x[0], x[1]);
        let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
        if norm < tol {
            return Some(x);
        }
        let j = params.jacobian(x[0], x[1]);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 || !det.is_finite() {
            return None;
        }
        let dx = [
            (-f[0] * j[1][1] + f[1] * j[0][1]) / det,
            (-f[1] * j[0][0] + f[0] * j[1][0]) / det,
        ];
        // step damping keeps seeds from overshooting to far-away roots
        let cap = 0.2;
        let step = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
        let scale = if step > cap { cap / step } else { 1.0 };
        x[0] += scale * dx[0];
        x[1] += scale * dx[1];
        if !x[0].is_finite() || !x[1].is_finite() {
            return None;
        }
    }
    None
}

/// Count-transition scan for the bistable window of the 2D model.
///
/// Returns the two b1 values where the number of domain equilibria changes
/// (saddle-node collision at the lower end, boundary collision at the upper
/// end), located by bisection to `tol`.
///
/// ```
/// use separatrix::model::{bistable_window, ModelParams};
///
/// let (lo, hi) = bistable_window(&ModelParams::default(), 1.5, 3.0, 1e-6)?;
/// assert!((lo - 1.9661).abs() < 5e-3);
/// assert!((hi - 2.4712).abs() < 5e-3);
/// # Ok::<(), separatrix::Error>(())
/// ```
pub fn bistable_window(template: &ModelParams, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    // the window is a property of the vector field, not of the PDE domain, so
    // the root search uses a box generous enough that the bloom branch never
    // drifts out of view near the upper endpoint
    let domain = DomainBox::new(vec![0.25, 0.0], vec![0.70, 0.25]);
    let bistable = |b1: f64| -> bool {
        let p = ModelParams { b1, ..*template };
        let eqs = find_equilibria(&p, &domain, 1e-10);
        eqs.stable().len() >= 2 && eqs.saddle().is_some()
    };
    let bisect = |mut a: f64, mut b: f64, target_hi: bool| -> f64 {
        // invariant: bistable(a) != bistable(b)
        while b - a > tol {
            let m = 0.5 * (a + b);
            if bistable(m) == target_hi {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    };
    // coarse scan to bracket the two transitions
    let steps = 60;
    let mut brackets: Vec<(f64, f64, bool)> = Vec::new();
    let mut prev_b1 = lo;
    let mut prev_bi = bistable(lo);
    for k in 1..=steps {
        let b1 = lo + (hi - lo) * k as f64 / steps as f64;
        let bi = bistable(b1);
        if bi != prev_bi {
            brackets.push((prev_b1, b1, bi));
        }
        prev_b1 = b1;
        prev_bi = bi;
    }
    if brackets.len() != 2 {
        return Err(Error::NotBistable(format!(
            "expected 2 bistability transitions in [{lo}, {hi}], found {}",
            brackets.len()
        )));
    }
    let (a0, b0, up0) = brackets[0];
    let (a1, b1v, up1) = brackets[1];
    Ok((bisect(a0, b0, up0), bisect(a1, b1v, up1)))
}

/// Approximate the deterministic separatrix (stable manifold of the saddle)
/// by integrating the reversed flow from two seeds displaced ±1e-5 along the
/// stable eigenvector, until the trajectory leaves the domain.
///
/// `step` caps the spacing between consecutive vertices.
pub fn deterministic_separatrix(
    params: &ModelParams,
    domain: &DomainBox,
    step: f64,
) -> Result<Polyline> {
    let eqs = find_equilibria(params, domain, 1e-10);
    let saddle = eqs
        .saddle()
        .ok_or_else(|| Error::NotBistable("no saddle equilibrium in domain".into()))?;
    let jac = params.jacobian(saddle.state[0], saddle.state[1]);
    let lam = saddle.eigenvalues[0]; // negative (stable) eigenvalue
    debug_assert!(lam < 0.0);
    // eigenvector of the 2x2 Jacobian for eigenvalue lam
    let v = {
        let r1 = [jac[0][0] - lam, jac[0][1]];
        let r2 = [jac[1][0], jac[1][1] - lam];
        let cand = if r1[0].abs() + r1[1].abs() > r2[0].abs() + r2[1].abs() {
            [-r1[1], r1[0]]
        } else {
            [-r2[1], r2[0]]
        };
        let n = (cand[0] * cand[0] + cand[1] * cand[1]).sqrt();
        [cand[0] / n, cand[1] / n]
    };
    let trace_branch = |sign: f64| -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        let mut x = [
            saddle.state[0] + sign * 1e-5 * v[0],
            saddle.state[1] + sign * 1e-5 * v[1],
        ];
        let mut f = [0.0; 2];
        for _ in 0..2_000_000 {
            if !domain.contains(&x) {
                // clip the exit point onto the boundary along the last segment
                if let Some(prev) = pts.last().copied() {
                    if let Some(clipped) = clip_to_box(prev, x, domain) {
                        pts.push(clipped);
                    }
                }
                break;
            }
            pts.push(x);
            let p = params.drift(x[0], x[1]);
            f = [p[0], p[1]];
            let speed = (f[0] * f[0] + f[1] * f[1]).sqrt().max(1e-12);
            let h = (step / speed).min(0.5);
            x = rk4_reversed(params, x, h);
            if !x[0].is_finite() || !x[1].is_finite() {
                break;
            }
        }
        let _ = f;
        pts
    };
    let mut a = trace_branch(-1.0);
    let b = trace_branch(1.0);
    a.reverse();
    a.push(saddle.state);
    a.extend(b);
    Polyline::new(a)
}

fn rk4_reversed(params: &ModelParams, x: [f64; 2], h: f64) -> [f64; 2] {
    let f = |y: [f64; 2]| {
        let d = params.drift(y[0], y[1]);
        [-d[0], -d[1]]
    };
    let k1 = f(x);
    let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
    let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
    let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]]);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn clip_to_box(inside: [f64; 2], outside: [f64; 2], domain: &DomainBox) -> Option<[f64; 2]> {
    let mut t = 1.0f64;
    for ax in 0..2 {
        let d = outside[ax] - inside[ax];
        if d == 0.0 {
            continue;
        }
        for bound in [domain.lo[ax], domain.hi[ax]] {
            let tc = (bound - inside[ax]) / d;
            if tc > 1e-12 && tc < t {
                let other = 1 - ax;
                let y = inside[other] + tc * (outside[other] - inside[other]);
                if y >= domain.lo[other] - 1e-12 && y <= domain.hi[other] + 1e-12 {
                    t = tc;
                }
            }
        }
    }
    if t < 1.0 {
        Some([
            (inside[0] + t * (outside[0] - inside[0])).clamp(domain.lo[0], domain.hi[0]),
            (inside[1] + t * (outside[1] - inside[1])).clamp(domain.lo[1], domain.hi[1]),
        ])
    } else {
        None
    }
}

/// Quasi-steady 1D reduction: the temperature equation is slaved to its
/// nullcline T*(u), leaving a closed Itô SDE for the biomass,
/// `du = f(u; b1) dt + σ √(u+δ) dW` with effective diffusion
/// `D(u) = (σ²/2)(u+δ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reduced1DModel {
    pub params: ModelParams,
}

impl Reduced1DModel {
    /// T*(u) = [b (1 − S(u)) / a]^{1/4}.
    pub fn t_star(&self, u: f64) -> f64 {
        let radicand = self.params.b * (1.0 - self.params.s_of_u(u)) / self.params.a;
        debug_assert!(radicand >= 0.0);
        radicand.powf(0.25)
    }

    /// Reduced drift f(u; b1) = u [g(T*(u)) − u] − μ u.
    pub fn f(&self, u: f64, b1: f64) -> f64 {
        let p = ModelParams { b1, ..self.params };
        u * (p.g_of_t(self.t_star(u)) - u) - p.mu * u
    }

    /// Effective diffusion D(u) = (σ²/2)(u + δ).
    pub fn d(&self, u: f64) -> f64 {
        0.5 * self.params.sigma_u * self.params.sigma_u * (u + self.params.delta)
    }
}

/// Build the 1D quasi-steady reduction of the 2D model.
pub fn reduce_1d(params: &ModelParams) -> Result<Reduced1DModel> {
    params.validate()?;
    if params.s1 > 1.0 {
        return Err(Error::InvalidParameter(
            "s1 > 1 makes the T*(u) radicand negative near u = 0".into(),
        ));
    }
    Ok(Reduced1DModel { params: *params })
}
