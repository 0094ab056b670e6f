//! Seeded Euler–Maruyama integration with reflecting boundaries, Monte Carlo
//! mean-first-passage-time estimation and long-run histograms.
//!
//! Every trajectory draws from its own counter-based substream derived from
//! `(master seed, trajectory index)`, so parallel and serial runs agree
//! bit-for-bit regardless of worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SdeSystem;
use crate::pde::EllipseRegion;

/// Simulation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub n_traj: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, seed: u64, n_traj: usize) -> Self {
        assert!(dt > 0.0 && t_max >= dt && n_traj >= 1);
        SimConfig { dt, t_max, seed, n_traj }
    }
}

/// RNG for trajectory `index` under `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Streaming Euler–Maruyama integrator:
/// x ← x + F(x)Δt + G(x)√Δt ξ, then mirror reflection at ∂Ω and u ← max(u, 0).
pub struct Stepper<'a> {
    system: &'a SdeSystem,
    dt: f64,
    sqrt_dt: f64,
    rng: ChaCha8Rng,
    x: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    step_count: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a SdeSystem, x0: &[f64], dt: f64, rng: ChaCha8Rng) -> Self {
        assert_eq!(x0.len(), system.dim());
        assert!(system.domain.contains(x0), "x0 must lie in the domain");
        let dim = system.dim();
        Stepper {
            system,
            dt,
            sqrt_dt: dt.sqrt(),
            rng,
            x: x0.to_vec(),
            drift: vec![0.0; dim],
            noise: vec![0.0; dim],
            step_count: 0,
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// Advance one step.
    #[inline]
    pub fn step(&mut self) -> Result<&[f64]> {
        self.system.drift(&self.x, &mut self.drift);
        self.system.noise_diag(&self.x, &mut self.noise);
        let domain = &self.system.domain;
        for ax in 0..self.x.len() {
            let xi: f64 = self.rng.sample(StandardNormal);
            let mut v = self.x[ax] + self.drift[ax] * self.dt + self.noise[ax] * self.sqrt_dt * xi;
            let (lo, hi) = (domain.lo[ax], domain.hi[ax]);
            if v < lo {
                v = 2.0 * lo - v;
            } else if v > hi {
                v = 2.0 * hi - v;
            }
            // a huge excursion can overshoot the opposite wall after one
            // reflection; clamp as a last resort (also enforces u ≥ 0, since
            // the concentration axis has lo = 0)
            self.x[ax] = v.clamp(lo, hi);
        }
        self.step_count += 1;
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrajectoryDiverged(self.step_count));
        }
        Ok(&self.x)
    }
}

/// Dense path sample: all states including the initial one, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub dt: f64,
    pub dim: usize,
    pub states: Vec<f64>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
}

/// Integrate one trajectory from `x0` over `cfg.t_max` and record every step.
pub fn simulate_path(system: &SdeSystem, x0: &[f64], cfg: &SimConfig) -> Result<PathSample> {
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    let dim = system.dim();
    let mut stepper = Stepper::new(system, x0, cfg.dt, substream(cfg.seed, 0));
    let mut states = Vec::with_capacity((n_steps + 1) * dim);
    states.extend_from_slice(x0);
    for _ in 0..n_steps {
        states.extend_from_slice(stepper.step()?);
    }
    Ok(PathSample { dt: cfg.dt, dim, states })
}

/// Monte Carlo mean first passage time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfptEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub censored_fraction: f64,
    pub n: usize,
}

/// Sample a point uniformly in an elliptical region by rejection from its
/// bounding box, intersected with the domain.
fn sample_in_region(region: &EllipseRegion, system: &SdeSystem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = region.center.len();
    let mut x = vec![0.0; dim];
    loop {
        for ax in 0..dim {
            let c = region.center[ax];
            let r = region.semi_axes[ax];
            x[ax] = rng.gen_range((c - r)..(c + r));
        }
        if region.contains(&x) && system.domain.contains(&x) {
            return x;
        }
    }
}

/// Estimate the MFPT from `r_start` into `r_target` with `cfg.n_traj`
/// trajectories. Trajectories still outside the target at `t_max` are
/// censored; the mean and its standard error come from the Kaplan–Meier
/// restricted mean (Greenwood variance), reducing to the plain sample mean
/// and SE when nothing is censored.
pub fn mc_mfpt(
    system: &SdeSystem,
    r_start: &EllipseRegion,
    r_target: &EllipseRegion,
    cfg: &SimConfig,
) -> Result<MfptEstimate> {
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    let outcomes: Vec<Result<(f64, bool)>> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|traj| {
            let mut rng = substream(cfg.seed, traj);
            let x0 = sample_in_region(r_start, system, &mut rng);
            if r_target.contains(&x0) {
                return Err(Error::OverlappingRegions);
            }
            let mut stepper = Stepper::new(system, &x0, cfg.dt, rng);
            for k in 1..=n_steps {
                let x = stepper.step()?;
                if r_target.contains(x) {
                    return Ok((k as f64 * cfg.dt, false));
                }
            }
            Ok((cfg.t_max, true))
        })
        .collect();
    let mut taus: Vec<f64> = Vec::with_capacity(cfg.n_traj);
    let mut n_censored = 0usize;
    for o in outcomes {
        let (tau, censored) = o?;
        if censored {
            n_censored += 1;
        } else {
            taus.push(tau);
        }
    }
    if taus.is_empty() {
        return Err(Error::NoTransitions);
    }
    let n = cfg.n_traj;
    Ok(km_estimate(&mut taus, n_censored, n, cfg.t_max))
}

/// Kaplan–Meier restricted mean on [0, t_max] with all censoring at `t_max`.
fn km_estimate(taus: &mut [f64], n_censored: usize, n: usize, t_max: f64) -> MfptEstimate {
    taus.sort_by(f64::total_cmp);
    // with censoring only at t_max, ∫S dt = (Σ τᵢ + n_c·t_max)/n
    let sum: f64 = taus.iter().sum();
    let mean = (sum + n_censored as f64 * t_max) / n as f64;
    let censored_fraction = n_censored as f64 / n as f64;
    let std_error = if n_censored == 0 {
        let var = taus.iter().map(|&t| (t - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        // group tied event times
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &t in taus.iter() {
            match groups.last_mut() {
                Some((gt, d)) if *gt == t => *d += 1,
                _ => groups.push((t, 1)),
            }
        }
        // survival after each event group and areas A_j = ∫_{t_j}^{t_max} S dt
        let k = groups.len();
        let mut s = vec![0.0; k];
        let mut at_risk = vec![0usize; k];
        let mut surv = 1.0;
        let mut remaining = n;
        for (j, &(_, d)) in groups.iter().enumerate() {
            at_risk[j] = remaining;
            surv *= 1.0 - d as f64 / remaining as f64;
            s[j] = surv;
            remaining -= d;
        }
        let mut area = vec![0.0; k];
        let mut acc = 0.0;
        for j in (0..k).rev() {
            let t_next = if j + 1 < k { groups[j + 1].0 } else { t_max };
            acc += s[j] * (t_next - groups[j].0);
            area[j] = acc;
        }
        let mut var = 0.0;
        for j in 0..k {
            let d = groups[j].1 as f64;
            let nj = at_risk[j] as f64;
            if nj > d {
                var += area[j] * area[j] * d / (nj * (nj - d));
            }
        }
        var.sqrt()
    };
    MfptEstimate { mean, std_error, censored_fraction, n }
}

/// Normalized per-axis histogram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.mass.len() as f64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.bin_width()
    }

    /// Indices of strict local maxima with mass above `rel_floor` times the
    /// global maximum (plateau-aware: compares against the nearest differing
    /// neighbours).
    pub fn local_maxima(&self, rel_floor: f64) -> Vec<usize> {
        let m = &self.mass;
        let floor = rel_floor * m.iter().cloned().fold(0.0, f64::max);
        let n = m.len();
        let mut out = Vec::new();
        for k in 0..n {
            if m[k] < floor {
                continue;
            }
            let mut l = k;
            while l > 0 && m[l - 1] == m[k] {
                l -= 1;
            }
            let mut r = k;
            while r + 1 < n && m[r + 1] == m[k] {
                r += 1;
            }
            let left_ok = l == 0 || m[l - 1] < m[k];
            let right_ok = r == n - 1 || m[r + 1] < m[k];
            // report the plateau once, at its centre
            if left_ok && right_ok && k == (l + r) / 2 && (l > 0 || r < n - 1) {
                out.push(k);
            }
        }
        out
    }
}

/// Long-run per-axis histograms of a single trajectory started at `x0`,
/// discarding `burn_in` time units.
pub fn stationary_histogram(
    system: &SdeSystem,
    x0: &[f64],
    cfg: &SimConfig,
    burn_in: f64,
    bins: usize,
) -> Result<Vec<Histogram>> {
    assert!(burn_in < cfg.t_max, "burn-in must be shorter than the horizon");
    assert!(bins >= 2);
    let dim = system.dim();
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    let n_burn = (burn_in / cfg.dt).round() as usize;
    let mut counts = vec![vec![0u64; bins]; dim];
    let mut stepper = Stepper::new(system, x0, cfg.dt, substream(cfg.seed, 0));
    let mut retained = 0u64;
    for k in 1..=n_steps {
        let x = stepper.step()?;
        if k <= n_burn {
            continue;
        }
        retained += 1;
        for ax in 0..dim {
            let (lo, hi) = (system.domain.lo[ax], system.domain.hi[ax]);
            let b = (((x[ax] - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
            counts[ax][b] += 1;
        }
    }
    if retained == 0 {
        return Err(Error::InsufficientData("no samples retained after burn-in".into()));
    }
    Ok((0..dim)
        .map(|ax| Histogram {
            lo: system.domain.lo[ax],
            hi: system.domain.hi[ax],
            mass: counts[ax].iter().map(|&c| c as f64 / retained as f64).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        default_domain_2d, find_equilibria, DomainBox, ModelParams, SdeKind, SdeSystem, Stability,
    };

    fn phyto(sigma: f64) -> SdeSystem {
        SdeSystem::phyto(ModelParams::with_b1_sigma(2.1, sigma)).unwrap()
    }

    #[test]
    fn deterministic_paths_converge_to_the_stable_equilibria() {
        let sys = phyto(0.0);
        let eq = find_equilibria(&ModelParams::with_b1_sigma(2.1, 0.0), &default_domain_2d(), 1e-10);
        let e1 = eq.background().unwrap().state;
        let e3 = eq.bloom().unwrap().state;
        let cfg = SimConfig::new(1e-3, 500.0, 1, 1);
        for (x0, target) in [([0.36, 0.005], e1), ([0.50, 0.07], e3)] {
            let path = simulate_path(&sys, &x0, &cfg).unwrap();
            let end = path.state(path.len() - 1);
            let err = ((end[0] - target[0]).powi(2) + (end[1] - target[1]).powi(2)).sqrt();
            assert!(err < 1e-3, "from {x0:?}: ended at {end:?}, expected {target:?}");
        }
    }

    #[test]
    fn states_stay_in_the_domain() {
        let sys = phyto(0.02);
        let mut stepper = Stepper::new(&sys, &[0.36, 0.005], 1e-2, substream(11, 0));
        for _ in 0..1_000_000 {
            let x = stepper.step().unwrap();
            assert!(sys.domain.contains(x));
            assert!(x[1] >= 0.0);
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_paths() {
        let sys = phyto(0.015);
        let cfg = SimConfig::new(1e-2, 50.0, 42, 1);
        let a = simulate_path(&sys, &[0.40, 0.03], &cfg).unwrap();
        let b = simulate_path(&sys, &[0.40, 0.03], &cfg).unwrap();
        assert_eq!(a, b);
        let cfg2 = SimConfig::new(1e-2, 50.0, 43, 1);
        let c = simulate_path(&sys, &[0.40, 0.03], &cfg2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn immediate_absorption_gives_mean_within_one_step() {
        // strong outward drift, start region flush against a large target
        let sys = SdeSystem {
            kind: SdeKind::LinearDrift1D { lambda: 5.0, sigma: 0.0 },
            domain: DomainBox::new(vec![0.0], vec![1.0]),
        };
        let r_start = EllipseRegion::new(vec![0.10], vec![0.001]);
        let r_target = EllipseRegion::new(vec![0.551], vec![0.449]);
        let cfg = SimConfig::new(1e-2, 10.0, 5, 200);
        let est = mc_mfpt(&sys, &r_start, &r_target, &cfg).unwrap();
        assert!(est.mean <= cfg.dt + 1e-12, "mean = {}", est.mean);
        assert_eq!(est.censored_fraction, 0.0);
    }

    #[test]
    fn all_censored_reports_no_transitions() {
        // zero drift, zero noise: the trajectory never moves
        let sys = SdeSystem {
            kind: SdeKind::LinearDrift1D { lambda: 0.0, sigma: 0.0 },
            domain: DomainBox::new(vec![0.0], vec![1.0]),
        };
        let r_start = EllipseRegion::new(vec![0.2], vec![0.01]);
        let r_target = EllipseRegion::new(vec![0.8], vec![0.01]);
        let cfg = SimConfig::new(1e-2, 1.0, 5, 10);
        assert!(matches!(mc_mfpt(&sys, &r_start, &r_target, &cfg), Err(Error::NoTransitions)));
    }

    #[test]
    fn doubling_trajectories_shrinks_the_standard_error_by_root_two() {
        let sys = SdeSystem::schlogl(0.1, 0.5, 0.9, 0.15).unwrap();
        let r_start = EllipseRegion::new(vec![0.1], vec![0.015]);
        let r_target = EllipseRegion::new(vec![0.9], vec![0.015]);
        let mut ratios = Vec::new();
        for seed in 0..4 {
            let e1 = mc_mfpt(&sys, &r_start, &r_target, &SimConfig::new(1e-2, 1e4, seed, 300))
                .unwrap();
            let e2 =
                mc_mfpt(&sys, &r_start, &r_target, &SimConfig::new(1e-2, 1e4, seed + 100, 600))
                    .unwrap();
            ratios.push(e1.std_error / e2.std_error);
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let target = 2.0_f64.sqrt();
        assert!(
            (mean_ratio - target).abs() < 0.15 * target,
            "mean SE ratio {mean_ratio}, expected ≈ {target}"
        );
    }

    #[test]
    fn km_tail_correction_matches_hand_computation() {
        // events at 1, 2 and one censoring at t_max = 10 (n = 3):
        // mean = (1 + 2 + 10)/3
        let mut taus = vec![1.0, 2.0];
        let est = km_estimate(&mut taus, 1, 3, 10.0);
        assert!((est.mean - 13.0 / 3.0).abs() < 1e-14);
        // Greenwood: A_1 = ∫_1^10 S = (2/3)(2-1) + (1/3)(10-2) = 10/3
        //            A_2 = (1/3)(10-2) = 8/3
        // var = A_1²·1/(3·2) + A_2²·1/(2·1) = 100/54 + 64/18 = 5.407407...
        let var = (10.0f64 / 3.0).powi(2) / 6.0 + (8.0f64 / 3.0).powi(2) / 2.0;
        assert!((est.std_error - var.sqrt()).abs() < 1e-12);
        assert!((est.censored_fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_masses_are_normalized_and_bimodal_at_moderate_noise() {
        let sys = phyto(0.010);
        let cfg = SimConfig::new(1e-2, 60_000.0, 7, 1);
        let hists = stationary_histogram(&sys, &[0.36, 0.005], &cfg, 1000.0, 200).unwrap();
        for h in &hists {
            let total: f64 = h.mass.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // p_u: two local maxima near u ≈ 0 and u ≈ 0.078
        let peaks = hists[1].local_maxima(0.05);
        assert!(peaks.len() >= 2, "expected a bimodal marginal, peaks at {peaks:?}");
        let centers: Vec<f64> = peaks.iter().map(|&k| hists[1].bin_center(k)).collect();
        assert!(centers.iter().any(|&u| u < 0.01), "low mode missing: {centers:?}");
        assert!(
            centers.iter().any(|&u| (u - 0.078).abs() < 0.015),
            "bloom mode missing: {centers:?}"
        );
    }

    #[test]
    fn equilibria_lookup_used_above_is_bistable() {
        let eq = find_equilibria(&ModelParams::with_b1_sigma(2.1, 0.0), &default_domain_2d(), 1e-10);
        assert_eq!(eq.equilibria.iter().filter(|e| e.stability == Stability::Stable).count(), 2);
    }
}
