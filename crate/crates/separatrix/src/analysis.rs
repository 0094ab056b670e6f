//! Regression and model-selection layer: least-squares fits, BIC hinge fits
//! with warning intervals, the scaling-law pipeline verifying
//! log⟨τ⟩ = c₁ + c₂/EWS_geom², the weak-noise validity check and the
//! robustness harness.
//!
//! The pipeline composes three regressions per parameter point:
//! (i) log⟨τ⟩ vs 1/σ² gives the large-deviation rate Δ; (ii) EWS_geom vs σ
//! through the origin gives the geometric coefficient K; (iii) log⟨τ⟩ vs
//! 1/EWS_geom² gives (c₁, c₂). The asymptotic elimination predicts
//! c₂ = Δ·K², which fit (iii) must reproduce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    curve_distance, ews_geom, ews_geom_1d, extract_separatrix, Polyline,
};
use crate::indicators::{classic_ews, EwsProtocol};
use crate::model::{
    default_domain_2d, deterministic_separatrix, find_equilibria, DomainBox, ModelParams,
    SdeSystem,
};
use crate::pde::{assemble_generator, region_average, solve_committor, solve_mfpt, EllipseRegion,
    Grid, DEFAULT_RADIUS_SCHLOGL, DEFAULT_SEMI_AXES_2D};
use crate::simulate::{mc_mfpt, SimConfig};

/// Ordinary least-squares result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// OLS fit of y on x with intercept; R² = 1 − RSS/TSS.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<FitResult> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData("linear fit needs at least 2 points".into()));
    }
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|&v| (v - xm) * (v - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("constant x in linear fit".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x.iter().zip(y).map(|(&a, &b)| (b - intercept - slope * a).powi(2)).sum();
    let tss: f64 = y.iter().map(|&b| (b - ym) * (b - ym)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    Ok(FitResult { slope, intercept, r_squared, n })
}

/// Least-squares line through the origin (slope = Σxy/Σx²); R² is still
/// reported about the mean of y.
pub fn through_origin_fit(x: &[f64], y: &[f64]) -> Result<FitResult> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData("fit needs at least 2 points".into()));
    }
    let sxx: f64 = x.iter().map(|&v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all-zero x in through-origin fit".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let slope = sxy / sxx;
    let ym = y.iter().sum::<f64>() / n as f64;
    let rss: f64 = x.iter().zip(y).map(|(&a, &b)| (b - slope * a).powi(2)).sum();
    let tss: f64 = y.iter().map(|&b| (b - ym) * (b - ym)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    Ok(FitResult { slope, intercept: 0.0, r_squared, n })
}

/// Continuous two-segment hinge fit selected by BIC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HingeFit {
    /// BIC-optimal breakpoint.
    pub breakpoint: f64,
    /// ΔBIC ≤ 2 warning interval around the optimum.
    pub interval: (f64, f64),
    /// (candidate, BIC) profile over all interior sample points.
    pub bic_profile: Vec<(f64, f64)>,
    pub left_slope: f64,
    pub right_slope: f64,
    pub intercept: f64,
}

/// BIC parameter count: β₀, β₁, β₂ and the noise variance.
const HINGE_BIC_P: f64 = 4.0;

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    // Gaussian elimination with partial pivoting on a 3×3 system
    let mut m = a;
    let mut rhs = b;
    for j in 0..3 {
        let p = (j..3).max_by(|&r, &s| m[r][j].abs().total_cmp(&m[s][j].abs()))?;
        m.swap(j, p);
        rhs.swap(j, p);
        if m[j][j].abs() < 1e-300 {
            return None;
        }
        for i in (j + 1)..3 {
            let f = m[i][j] / m[j][j];
            for c in j..3 {
                m[i][c] -= f * m[j][c];
            }
            rhs[i] -= f * rhs[j];
        }
    }
    let mut x = [0.0; 3];
    for j in (0..3).rev() {
        let mut acc = rhs[j];
        for c in (j + 1)..3 {
            acc -= m[j][c] * x[c];
        }
        x[j] = acc / m[j][j];
    }
    Some(x)
}

fn hinge_rss(x: &[f64], y: &[f64], k: f64) -> Option<([f64; 3], f64)> {
    // least squares for y = β0 + β1 x + β2 max(0, x − k)
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let row = [1.0, xi, (xi - k).max(0.0)];
        for a in 0..3 {
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * yi;
        }
    }
    let beta = solve3(ata, atb)?;
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - beta[0] - beta[1] * xi - beta[2] * (xi - k).max(0.0)).powi(2))
        .sum();
    Some((beta, rss))
}

/// Fit the continuous hinge y = β₀ + β₁x + β₂·max(0, x−k) for every interior
/// sample point k; select the breakpoint by BIC(k) = n·ln(RSS/n) + 4·ln(n)
/// and report the ΔBIC ≤ 2 interval.
///
/// ```
/// use separatrix::analysis::hinge_fit_bic;
///
/// let x: Vec<f64> = (0..40).map(|k| k as f64 / 10.0).collect();
/// let y: Vec<f64> =
///     x.iter().map(|&v| 1.0 - 0.5 * (v - 2.0f64).max(0.0)).collect();
/// let fit = hinge_fit_bic(&x, &y)?;
/// assert!((fit.breakpoint - 2.0).abs() < 1e-12);
/// # Ok::<(), separatrix::Error>(())
/// ```
pub fn hinge_fit_bic(x: &[f64], y: &[f64]) -> Result<HingeFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 6 {
        return Err(Error::InsufficientData("hinge fit needs at least 6 points".into()));
    }
    // sort by x
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let nf = n as f64;
    let mut profile: Vec<(f64, f64, [f64; 3])> = Vec::new();
    for k_idx in 1..n - 1 {
        let k = xs[k_idx];
        if let Some((beta, rss)) = hinge_rss(&xs, &ys, k) {
            let bic = nf * (rss.max(1e-300) / nf).ln() + HINGE_BIC_P * nf.ln();
            profile.push((k, bic, beta));
        }
    }
    if profile.is_empty() {
        return Err(Error::SingularSystem("no admissible hinge candidate".into()));
    }
    let (best_k, best_bic, best_beta) = profile
        .iter()
        .cloned()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let in_band: Vec<f64> =
        profile.iter().filter(|(_, bic, _)| *bic <= best_bic + 2.0).map(|(k, _, _)| *k).collect();
    let interval = (
        in_band.iter().cloned().fold(f64::INFINITY, f64::min),
        in_band.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(HingeFit {
        breakpoint: best_k,
        interval,
        bic_profile: profile.iter().map(|(k, bic, _)| (*k, *bic)).collect(),
        left_slope: best_beta[1],
        right_slope: best_beta[1] + best_beta[2],
        intercept: best_beta[0],
    })
}

/// One joined row of the sweep table behind the figures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub b1: f64,
    pub sigma: f64,
    pub ews_geom: f64,
    pub mdb: Option<f64>,
    pub mds: Option<f64>,
    /// ln of the FDM region-averaged MFPT over R_{E1}.
    pub log_tau_fdm: f64,
    pub log_tau_mc: Option<f64>,
    pub mc_se: Option<f64>,
    pub log10_var: Option<f64>,
    pub ac1: Option<f64>,
    pub flags: Vec<String>,
}

/// Default σ sweep {0.005 : 0.0025 : 0.025}.
pub fn default_sigmas() -> Vec<f64> {
    (0..9).map(|k| 0.005 + 0.0025 * k as f64).collect()
}

/// Default b1 scan {2.00 : 0.004 : 2.44} for indicator curves.
pub fn default_b1_scan() -> Vec<f64> {
    (0..=110).map(|k| 2.0 + 0.004 * k as f64).collect()
}

/// Reference noise level for the MDS shift measure.
pub const SIGMA_REF: f64 = 0.005;

/// Settings for one fixed-b1 σ sweep of the 2D model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOptions {
    pub b1: f64,
    pub sigmas: Vec<f64>,
    pub grid_n: [usize; 2],
    /// Fractional domain padding: T padded symmetrically, u padded upward
    /// only (the reflecting u = 0 wall is physical).
    pub padding: f64,
    pub delta: f64,
    /// Neighbourhood scale κ multiplying the default region semi-axes.
    pub kappa: f64,
    /// σ_T = ratio · σ_u; 1 is the separable default.
    pub sigma_t_ratio: f64,
    pub alpha: f64,
    /// Also compute MDB/MDS (needs Γ_det and a σ_ref committor solve).
    pub with_distances: bool,
}

impl SweepOptions {
    pub fn new(b1: f64) -> Self {
        SweepOptions {
            b1,
            sigmas: default_sigmas(),
            grid_n: [141, 141],
            padding: 0.0,
            delta: 1e-4,
            kappa: 1.0,
            sigma_t_ratio: 1.0,
            alpha: 0.1,
            with_distances: false,
        }
    }

    pub fn domain(&self) -> DomainBox {
        let base = default_domain_2d();
        let pad_t = 0.5 * self.padding * base.extent(0);
        let pad_u = self.padding * base.extent(1);
        DomainBox::new(
            vec![base.lo[0] - pad_t, base.lo[1]],
            vec![base.hi[0] + pad_t, base.hi[1] + pad_u],
        )
    }

    pub fn params(&self, sigma_u: f64) -> ModelParams {
        ModelParams {
            b1: self.b1,
            delta: self.delta,
            sigma_t: self.sigma_t_ratio * sigma_u,
            sigma_u,
            ..ModelParams::default()
        }
    }

    /// Background and bloom neighbourhoods, scaled by κ.
    pub fn regions(&self) -> Result<(EllipseRegion, EllipseRegion)> {
        let eq = find_equilibria(&self.params(0.0), &self.domain(), 1e-10);
        let e1 = eq
            .background()
            .ok_or_else(|| Error::NotBistable(format!("no background state at b1 = {}", self.b1)))?
            .state;
        let e3 = eq
            .bloom()
            .ok_or_else(|| Error::NotBistable(format!("no bloom state at b1 = {}", self.b1)))?
            .state;
        let semi: Vec<f64> = DEFAULT_SEMI_AXES_2D.iter().map(|&r| r * self.kappa).collect();
        Ok((
            EllipseRegion::new(vec![e1[0], e1[1]], semi.clone()),
            EllipseRegion::new(vec![e3[0], e3[1]], semi),
        ))
    }
}

/// Committor, separatrix, EWS_geom and FDM log⟨τ⟩ for one (b1, σ) cell.
/// Returns the record together with the extracted separatrix for reuse.
pub fn solve_cell(opts: &SweepOptions, sigma: f64) -> Result<(SweepRecord, Polyline)> {
    let domain = opts.domain();
    let grid = Grid::new(domain.clone(), vec![opts.grid_n[0], opts.grid_n[1]]);
    let system = SdeSystem::phyto_with_domain(opts.params(sigma), domain)?;
    let (r1, r3) = opts.regions()?;
    let op = assemble_generator(&system, &grid)?;
    let q = solve_committor(&op, &r1, &r3)?;
    let gamma = extract_separatrix(&q, 0.5)?;
    let ews = ews_geom(&q, &gamma, opts.alpha)?;
    let tau = solve_mfpt(&op, &r3)?;
    let tau_avg = region_average(&tau, &r1)?;
    if !(tau_avg > 0.0) {
        return Err(Error::InsufficientData(format!(
            "non-positive mean passage time at sigma = {sigma}"
        )));
    }
    let mut flags = Vec::new();
    if opts.sigma_t_ratio != 1.0 {
        flags.push("nonseparable".to_string());
    }
    Ok((
        SweepRecord {
            b1: opts.b1,
            sigma,
            ews_geom: ews,
            mdb: None,
            mds: None,
            log_tau_fdm: tau_avg.ln(),
            log_tau_mc: None,
            mc_se: None,
            log10_var: None,
            ac1: None,
            flags,
        },
        gamma,
    ))
}

/// Full σ sweep at fixed b1: per-σ committor/MFPT solves and, when
/// requested, the MDB/MDS shift measures against the deterministic
/// separatrix and the σ_ref separatrix.
pub fn sweep_fixed_b1(opts: &SweepOptions) -> Result<Vec<SweepRecord>> {
    if opts.sigmas.is_empty() {
        return Err(Error::InsufficientData("empty sigma sweep".into()));
    }
    let mut cells = Vec::with_capacity(opts.sigmas.len());
    for &sigma in &opts.sigmas {
        cells.push(solve_cell(opts, sigma)?);
    }
    if opts.with_distances {
        let domain = opts.domain();
        let h = domain.extent(0) / (opts.grid_n[0] - 1) as f64;
        let gamma_det = deterministic_separatrix(&opts.params(0.0), &domain, h)?;
        let gamma_ref = if opts.sigmas.iter().any(|&s| s == SIGMA_REF) {
            let k = opts.sigmas.iter().position(|&s| s == SIGMA_REF).unwrap();
            cells[k].1.clone()
        } else {
            solve_cell(opts, SIGMA_REF)?.1
        };
        for (rec, gamma) in &mut cells {
            rec.mdb = Some(curve_distance(gamma, &gamma_det));
            rec.mds = Some(curve_distance(gamma, &gamma_ref));
        }
    }
    Ok(cells.into_iter().map(|(rec, _)| rec).collect())
}

/// Settings for the b1-scan behind the indicator figures: EWS_geom (and
/// optionally MDB/MDS and the conditional time-series indicators) as
/// functions of b1 at a few noise levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndicatorSweepOptions {
    pub b1_grid: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub grid_n: [usize; 2],
    pub delta: f64,
    pub kappa: f64,
    pub alpha: f64,
    /// Also compute MDB/MDS per (b1, σ).
    pub with_distances: bool,
    /// Also run the conditional-sampling time-series protocol per (b1, σ).
    pub with_timeseries: bool,
    pub protocol: EwsProtocol,
}

impl Default for IndicatorSweepOptions {
    fn default() -> Self {
        IndicatorSweepOptions {
            b1_grid: default_b1_scan(),
            sigmas: vec![0.005, 0.010, 0.020],
            grid_n: [141, 141],
            delta: 1e-4,
            kappa: 1.0,
            alpha: 0.1,
            with_distances: false,
            with_timeseries: false,
            protocol: EwsProtocol::default(),
        }
    }
}

impl IndicatorSweepOptions {
    fn cell(&self, b1: f64) -> SweepOptions {
        SweepOptions {
            grid_n: self.grid_n,
            delta: self.delta,
            kappa: self.kappa,
            alpha: self.alpha,
            ..SweepOptions::new(b1)
        }
    }
}

/// Scan b1 at each noise level. Cells where the bloom state has left the
/// computational domain (near the upper end of the bistable window) are
/// recorded with a `gap` flag instead of failing the whole scan, matching the
/// role of gaps in the indicator figures.
pub fn indicator_sweep(opts: &IndicatorSweepOptions) -> Result<Vec<SweepRecord>> {
    if opts.b1_grid.is_empty() || opts.sigmas.is_empty() {
        return Err(Error::InsufficientData("empty indicator scan".into()));
    }
    let mut out = Vec::with_capacity(opts.b1_grid.len() * opts.sigmas.len());
    for &b1 in &opts.b1_grid {
        let cell_opts = opts.cell(b1);
        let regions = cell_opts.regions();
        let (r1, r3) = match regions {
            Ok(pair) => pair,
            Err(_) => {
                for &sigma in &opts.sigmas {
                    out.push(gap_record(b1, sigma));
                }
                continue;
            }
        };
        let gamma_det = if opts.with_distances {
            let domain = cell_opts.domain();
            let h = domain.extent(0) / (opts.grid_n[0] - 1) as f64;
            Some(deterministic_separatrix(&cell_opts.params(0.0), &domain, h)?)
        } else {
            None
        };
        let mut gamma_ref: Option<Polyline> = None;
        for &sigma in &opts.sigmas {
            let (mut rec, gamma) = match solve_cell(&cell_opts, sigma) {
                Ok(cell) => cell,
                Err(_) => {
                    out.push(gap_record(b1, sigma));
                    continue;
                }
            };
            if let Some(det) = &gamma_det {
                rec.mdb = Some(curve_distance(&gamma, det));
                let reference = match &gamma_ref {
                    Some(g) => g.clone(),
                    None => {
                        let g = if sigma == SIGMA_REF {
                            gamma.clone()
                        } else {
                            solve_cell(&cell_opts, SIGMA_REF)?.1
                        };
                        gamma_ref = Some(g.clone());
                        g
                    }
                };
                rec.mds = Some(curve_distance(&gamma, &reference));
            }
            if opts.with_timeseries {
                let system = SdeSystem::phyto_with_domain(cell_opts.params(sigma), cell_opts.domain())?;
                let ews = classic_ews(&system, &r1, &r3, &opts.protocol)?;
                if ews.gap {
                    rec.flags.push("gap".to_string());
                } else {
                    rec.log10_var = Some(ews.log10_var);
                    rec.ac1 = Some(ews.ac1);
                }
            }
            out.push(rec);
        }
    }
    Ok(out)
}

fn gap_record(b1: f64, sigma: f64) -> SweepRecord {
    SweepRecord {
        b1,
        sigma,
        ews_geom: f64::NAN,
        mdb: None,
        mds: None,
        log_tau_fdm: f64::NAN,
        log_tau_mc: None,
        mc_se: None,
        log10_var: None,
        ac1: None,
        flags: vec!["gap".to_string()],
    }
}

/// BIC hinge breakpoints of one indicator column at each noise level of a
/// b1-scan table. `column` extracts the indicator value (or `None` for a
/// gap); gapped points are skipped.
pub fn breakpoints_by_sigma(
    records: &[SweepRecord],
    column: impl Fn(&SweepRecord) -> Option<f64>,
) -> Result<Vec<(f64, HingeFit)>> {
    let mut sigmas: Vec<f64> = records.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut out = Vec::with_capacity(sigmas.len());
    for sigma in sigmas {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in records.iter().filter(|r| r.sigma == sigma) {
            if r.flags.iter().any(|f| f == "gap") {
                continue;
            }
            if let Some(v) = column(r) {
                if v.is_finite() {
                    x.push(r.b1);
                    y.push(v);
                }
            }
        }
        out.push((sigma, hinge_fit_bic(&x, &y)?));
    }
    Ok(out)
}

/// Settings for the 1D Schlögl verification pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchloglOptions {
    pub roots: [f64; 3],
    pub sigmas: Vec<f64>,
    pub n_nodes: usize,
    pub radius: f64,
    pub alpha: f64,
}

impl Default for SchloglOptions {
    fn default() -> Self {
        SchloglOptions {
            roots: [0.20, 0.50, 0.80],
            sigmas: default_sigmas(),
            n_nodes: 4001,
            radius: DEFAULT_RADIUS_SCHLOGL,
            alpha: 0.1,
        }
    }
}

/// σ sweep of the Schlögl model: 1D committor width analogue of EWS_geom and
/// FDM log⟨τ⟩ over R_{E1}.
pub fn schlogl_sweep(opts: &SchloglOptions) -> Result<Vec<SweepRecord>> {
    let [x1, x2, x3] = opts.roots;
    let mut out = Vec::with_capacity(opts.sigmas.len());
    for &sigma in &opts.sigmas {
        let system = SdeSystem::schlogl(x1, x2, x3, sigma)?;
        let grid = Grid::new(system.domain.clone(), vec![opts.n_nodes]);
        let r1 = EllipseRegion::new(vec![x1], vec![opts.radius]);
        let r3 = EllipseRegion::new(vec![x3], vec![opts.radius]);
        let op = assemble_generator(&system, &grid)?;
        let q = solve_committor(&op, &r1, &r3)?;
        let ews = ews_geom_1d(&q, opts.alpha)?;
        let tau = solve_mfpt(&op, &r3)?;
        let tau_avg = region_average(&tau, &r1)?;
        out.push(SweepRecord {
            b1: x2,
            sigma,
            ews_geom: ews,
            mdb: None,
            mds: None,
            log_tau_fdm: tau_avg.ln(),
            log_tau_mc: None,
            mc_se: None,
            log10_var: None,
            ac1: None,
            flags: vec!["schlogl".to_string()],
        });
    }
    Ok(out)
}

/// One row of the Monte Carlo cross-validation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McCheckRow {
    pub sigma: f64,
    /// Reference FDM mean passage time on the wall-resolving grid.
    pub tau_fdm: f64,
    pub tau_mc: f64,
    pub mc_se: f64,
    pub censored_fraction: f64,
    pub n_traj: usize,
    /// |τ_FDM − τ_MC| ≤ 3·SE.
    pub within_3se: bool,
}

/// Total simulated-time budget (time units) per noise level for the adaptive
/// Monte Carlo protocol.
pub const MC_TIME_BUDGET: f64 = 6.0e6;

/// Per-σ Monte Carlo protocol: the trajectory count is adapted to the
/// expected passage time so the total simulated time stays near
/// [`MC_TIME_BUDGET`], and the horizon is stretched to keep the censored
/// fraction negligible (≈ e⁻⁸) when passage times exceed the default 10⁶.
pub fn adaptive_mc_config(tau_expected: f64, seed: u64) -> SimConfig {
    let n = ((MC_TIME_BUDGET / tau_expected).round() as usize).clamp(16, 10_000);
    let t_max = (8.0 * tau_expected).max(1.0e6);
    SimConfig::new(1e-2, t_max, seed, n)
}

/// Number of u-axis nodes resolving the δ-layer of the multiplicative
/// √(u+δ) noise at the reflecting u = 0 wall (h_u ≤ δ/2). The mean passage
/// level is controlled by this layer: on the standard isotropic grids the
/// τ plateau still carries a large pre-asymptotic error, while the committor
/// geometry (and hence EWS_geom) is insensitive to it.
pub fn wall_resolving_nodes(opts: &SweepOptions) -> usize {
    let extent = opts.domain().extent(1);
    (2.0 * extent / opts.delta).ceil() as usize + 1
}

/// Reference FDM ⟨τ⟩ over R_{E1} on the wall-resolving grid (u axis refined
/// to h_u ≤ δ/2; the T axis keeps the standard count, to which the result is
/// insensitive).
pub fn reference_tau(opts: &SweepOptions, sigma: f64) -> Result<f64> {
    let domain = opts.domain();
    let grid = Grid::new(domain.clone(), vec![opts.grid_n[0], wall_resolving_nodes(opts)]);
    let system = SdeSystem::phyto_with_domain(opts.params(sigma), domain)?;
    let (r1, r3) = opts.regions()?;
    let op = assemble_generator(&system, &grid)?;
    let tau = solve_mfpt(&op, &r3)?;
    region_average(&tau, &r1)
}

/// Cross-validate the FDM passage times against direct Monte Carlo at every
/// noise level of the sweep. The FDM side uses the wall-resolving reference
/// grid; the MC side uses the adaptive protocol seeded per σ.
pub fn mc_agreement(opts: &SweepOptions, seed: u64) -> Result<Vec<McCheckRow>> {
    let (r1, r3) = opts.regions()?;
    let mut rows = Vec::with_capacity(opts.sigmas.len());
    for (k, &sigma) in opts.sigmas.iter().enumerate() {
        let tau_fdm = reference_tau(opts, sigma)?;
        let system = SdeSystem::phyto_with_domain(opts.params(sigma), opts.domain())?;
        let cfg = adaptive_mc_config(tau_fdm, seed.wrapping_add(k as u64));
        let est = mc_mfpt(&system, &r1, &r3, &cfg)?;
        rows.push(McCheckRow {
            sigma,
            tau_fdm,
            tau_mc: est.mean,
            mc_se: est.std_error,
            censored_fraction: est.censored_fraction,
            n_traj: est.n,
            within_3se: (tau_fdm - est.mean).abs() <= 3.0 * est.std_error,
        });
    }
    Ok(rows)
}

/// Scaling-law report for one fixed-b1 sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Large-deviation rate Δ from fit (i).
    pub delta: f64,
    /// Geometric coefficient K from fit (ii).
    pub k_coef: f64,
    pub c1: f64,
    pub c2_fit: f64,
    pub c2_pred: f64,
    pub rel_err: f64,
    pub r2_i: f64,
    pub r2_ii: f64,
    pub r2_iii: f64,
    pub sigma_max: f64,
}

/// Compose the three regressions of the scaling pipeline on records at one
/// fixed b1 (uses the FDM log⟨τ⟩ column).
///
/// The asymptotic law only holds in the weak-noise regime, so the fits are
/// restricted to the validity window σ ≤ σ_max determined by
/// [`validity_check`]; at least 4 noise levels must fall inside it.
pub fn scaling_pipeline(records: &[SweepRecord]) -> Result<ScalingReport> {
    if records.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "scaling pipeline needs at least 5 noise levels, got {}",
            records.len()
        )));
    }
    let validity = validity_check(records)?;
    let window: Vec<&SweepRecord> =
        records.iter().filter(|r| r.sigma <= validity.sigma_max).collect();
    if window.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "only {} noise levels inside the validity window sigma <= {}",
            window.len(),
            validity.sigma_max
        )));
    }
    let sigma: Vec<f64> = window.iter().map(|r| r.sigma).collect();
    let ews: Vec<f64> = window.iter().map(|r| r.ews_geom).collect();
    let log_tau: Vec<f64> = window.iter().map(|r| r.log_tau_fdm).collect();
    let inv_s2: Vec<f64> = sigma.iter().map(|&s| 1.0 / (s * s)).collect();
    let inv_e2: Vec<f64> = ews.iter().map(|&e| 1.0 / (e * e)).collect();
    let fit_i = linear_fit(&inv_s2, &log_tau)?;
    let fit_ii = through_origin_fit(&sigma, &ews)?;
    let fit_iii = linear_fit(&inv_e2, &log_tau)?;
    let c2_pred = fit_i.slope * fit_ii.slope * fit_ii.slope;
    Ok(ScalingReport {
        delta: fit_i.slope,
        k_coef: fit_ii.slope,
        c1: fit_iii.intercept,
        c2_fit: fit_iii.slope,
        c2_pred,
        rel_err: (fit_iii.slope - c2_pred).abs() / c2_pred.abs(),
        r2_i: fit_i.r_squared,
        r2_ii: fit_ii.r_squared,
        r2_iii: fit_iii.r_squared,
        sigma_max: validity.sigma_max,
    })
}

/// Weak-noise validity report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Largest σ whose prefix of EWS/σ ratios stays within 5% of its mean.
    pub sigma_max: f64,
    pub ratios: Vec<(f64, f64)>,
    /// True when all records have a separable diffusion tensor (σ_T = σ_u).
    pub separable: bool,
}

/// Relative-fluctuation tolerance of the EWS/σ ratio inside the linear
/// regime (measured against the prefix mean).
pub const VALIDITY_TOL: f64 = 0.05;

/// Find the largest σ such that the EWS_geom/σ ratios at all σ' ≤ σ deviate
/// from their mean by less than 5%.
pub fn validity_check(records: &[SweepRecord]) -> Result<ValidityReport> {
    if records.len() < 4 {
        return Err(Error::InsufficientData("validity check needs at least 4 noise levels".into()));
    }
    let mut rows: Vec<(f64, f64)> =
        records.iter().map(|r| (r.sigma, r.ews_geom / r.sigma)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sigma_max = rows[0].0;
    for m in 2..=rows.len() {
        let mean = rows[..m].iter().map(|&(_, r)| r).sum::<f64>() / m as f64;
        if rows[..m].iter().all(|&(_, r)| (r - mean).abs() < VALIDITY_TOL * mean.abs()) {
            sigma_max = rows[m - 1].0;
        }
    }
    let separable = records.iter().all(|r| !r.flags.iter().any(|f| f == "nonseparable"));
    Ok(ValidityReport { sigma_max, ratios: rows, separable })
}

/// One row of the robustness table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub label: String,
    /// Relative change of the log⟨τ⟩–1/EWS_geom² slope vs the base run, in
    /// percent.
    pub slope_change_pct: Option<f64>,
    pub r_squared: Option<f64>,
    pub error: Option<String>,
}

/// Slope of log⟨τ⟩ against 1/EWS_geom² over the **full** σ grid. The
/// robustness table compares this slope across perturbed reruns, so every
/// run must be fitted over the same σ range — the per-run validity window
/// of `scaling_pipeline` would change the sample between rows and conflate
/// window selection with the perturbation under test.
fn robustness_slope(records: &[SweepRecord]) -> Result<FitResult> {
    let x: Vec<f64> = records.iter().map(|r| (r.ews_geom * r.ews_geom).recip()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.log_tau_fdm).collect();
    linear_fit(&x, &y)
}

/// A perturbed region set is degenerate when an ellipse swallows the saddle:
/// the committor is then pinned to 0 or 1 at the very point the separatrix
/// must pass through, and the extracted layer width measures the Dirichlet
/// boundary instead of the transition zone.
fn degenerate_regions(opts: &SweepOptions) -> Result<Option<String>> {
    let eq = find_equilibria(&opts.params(0.0), &opts.domain(), 1e-10);
    let (r1, r3) = opts.regions()?;
    if let Some(saddle) = eq.saddle() {
        if r1.contains(&saddle.state) || r3.contains(&saddle.state) {
            return Ok(Some(
                "region contains the saddle: committor boundary-value problem degenerate"
                    .to_string(),
            ));
        }
    }
    Ok(None)
}

/// Re-run the σ sweep under the standard perturbations (grid resolution,
/// domain padding, regularisation δ, neighbourhood scale κ, noise
/// anisotropy) and report the change of the log⟨τ⟩–1/EWS_geom² slope
/// against the base run. Rows whose perturbed geometry is degenerate (see
/// [`RobustnessRow::error`]) are recorded, not fatal.
pub fn robustness_suite(base: &SweepOptions) -> Result<Vec<RobustnessRow>> {
    let base_fit = robustness_slope(&sweep_fixed_b1(base)?)?;
    let variations: Vec<(String, SweepOptions)> = vec![
        ("grid 101x101".into(), SweepOptions { grid_n: [101, 101], ..base.clone() }),
        ("grid 181x181".into(), SweepOptions { grid_n: [181, 181], ..base.clone() }),
        ("padding +10%".into(), SweepOptions { padding: 0.10, ..base.clone() }),
        ("padding +30%".into(), SweepOptions { padding: 0.30, ..base.clone() }),
        ("delta 5e-5".into(), SweepOptions { delta: 5e-5, ..base.clone() }),
        ("delta 2e-4".into(), SweepOptions { delta: 2e-4, ..base.clone() }),
        ("kappa 0.5".into(), SweepOptions { kappa: 0.5, ..base.clone() }),
        ("kappa 3.0".into(), SweepOptions { kappa: 3.0, ..base.clone() }),
        ("sigma_T = 2 sigma_u".into(), SweepOptions { sigma_t_ratio: 2.0, ..base.clone() }),
        ("sigma_T = 0.5 sigma_u".into(), SweepOptions { sigma_t_ratio: 0.5, ..base.clone() }),
    ];
    let mut rows = Vec::with_capacity(variations.len());
    for (label, opts) in variations {
        let outcome = match degenerate_regions(&opts) {
            Err(e) => Err(e),
            Ok(Some(msg)) => Err(Error::InsufficientData(msg)),
            Ok(None) => sweep_fixed_b1(&opts).and_then(|recs| robustness_slope(&recs)),
        };
        match outcome {
            Ok(fit) => rows.push(RobustnessRow {
                label,
                slope_change_pct: Some(
                    100.0 * (fit.slope - base_fit.slope) / base_fit.slope,
                ),
                r_squared: Some(fit.r_squared),
                error: None,
            }),
            Err(e) => rows.push(RobustnessRow {
                label,
                slope_change_pct: None,
                r_squared: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}
