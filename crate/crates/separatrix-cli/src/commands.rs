//! Subcommand implementations. Every command resolves its settings from the
//! run configuration (plus CLI overrides), computes through the library, and
//! writes header-stamped CSV/JSON artifacts (optionally SVG).

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use separatrix::analysis::{
    breakpoints_by_sigma, indicator_sweep, mc_agreement, robustness_suite, scaling_pipeline,
    schlogl_sweep, solve_cell, validity_check, IndicatorSweepOptions, SchloglOptions, SweepOptions,
    SweepRecord,
};
use separatrix::geometry::Polyline;
use separatrix::model::{
    bistable_window, default_domain_2d, deterministic_separatrix, find_equilibria, ModelParams,
    SdeSystem,
};
use separatrix::simulate::{stationary_histogram, SimConfig};
use separatrix::stationary::{bifurcation_curve, stationary_density_1d, DENSITY_NODES,
    DENSITY_U_MAX};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, opt_num, write_csv, write_json, write_svg, Cache, Header, Series};

pub struct Ctx {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub header_for: fn(&str, &str, u64) -> Header,
    pub config_hash: String,
    pub svg: bool,
}

impl Ctx {
    pub fn new(config: RunConfig, svg: bool) -> Self {
        let out_dir = PathBuf::from(&config.output.dir);
        let config_hash = config.hash();
        Ctx { config, out_dir, header_for: Header::new, config_hash, svg }
    }

    fn header(&self, command: &str) -> Header {
        (self.header_for)(command, &self.config_hash, self.config.output.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn params(cfg: &RunConfig, b1: f64, sigma: f64) -> ModelParams {
    ModelParams {
        b1,
        delta: cfg.model.delta,
        sigma_t: cfg.model.sigma_t_ratio * sigma,
        sigma_u: sigma,
        ..ModelParams::default()
    }
}

/// `equilibria`: the coexisting states and the bistable window.
pub fn equilibria(ctx: &Ctx, b1: f64) -> Result<(), CliError> {
    let p = params(&ctx.config, b1, 0.0);
    let eqs = find_equilibria(&p, &default_domain_2d(), 1e-10);
    let window = bistable_window(&p, 1.5, 3.0, 1e-6)?;
    #[derive(Serialize)]
    struct Out {
        b1: f64,
        equilibria: Vec<serde_json::Value>,
        bistable_window: (f64, f64),
    }
    let out = Out {
        b1,
        equilibria: eqs
            .equilibria
            .iter()
            .map(|e| {
                serde_json::json!({
                    "state": e.state,
                    "stability": format!("{:?}", e.stability),
                })
            })
            .collect(),
        bistable_window: window,
    };
    write_json(&ctx.path("equilibria.json"), &ctx.header("equilibria"), &out)?;
    println!("{}", serde_json::to_string_pretty(&out.equilibria).unwrap());
    println!("bistable window: [{:.4}, {:.4}]", window.0, window.1);
    Ok(())
}

/// `bifurcation`: deterministic branches and the expectation-centred
/// stochastic diagram over the b1 grid.
pub fn bifurcation(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let template = params(cfg, cfg.model.b1, 0.0);
    let b1_grid = cfg.sweep.b1_grid.values();
    let curve = bifurcation_curve(&template, &b1_grid, &cfg.sweep.indicator_sigmas)?;
    let mut rows = Vec::new();
    for s in &curve.series {
        for (k, &b1) in curve.b1_grid.iter().enumerate() {
            rows.push(vec![
                num(b1),
                num(s.sigma),
                num(s.ubar[k]),
                num(s.q10[k]),
                num(s.q90[k]),
            ]);
        }
    }
    write_csv(
        &ctx.path("bifurcation.csv"),
        &ctx.header("bifurcation"),
        &["b1", "sigma", "u_mean", "u_q10", "u_q90"],
        &rows,
    )?;
    let branch_rows: Vec<Vec<String>> = curve
        .branches
        .iter()
        .map(|b| vec![num(b.b1), num(b.u), format!("{:?}", b.stability)])
        .collect();
    write_csv(
        &ctx.path("bifurcation_branches.csv"),
        &ctx.header("bifurcation"),
        &["b1", "u", "stability"],
        &branch_rows,
    )?;
    if ctx.svg {
        let series: Vec<Series> = curve
            .series
            .iter()
            .map(|s| Series {
                label: format!("mean u, sigma={}", s.sigma),
                points: curve.b1_grid.iter().zip(&s.ubar).map(|(&x, &y)| (x, Some(y))).collect(),
            })
            .collect();
        write_svg(&ctx.path("bifurcation.svg"), "stochastic bifurcation diagram", &series)?;
    }
    println!("bifurcation: {} parameter points written", curve.b1_grid.len());
    Ok(())
}

/// `marginals`: reduced stationary density vs long-run histogram at one
/// (b1, σ).
pub fn marginals(ctx: &Ctx, b1: f64, sigma: f64) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let p = params(cfg, b1, sigma);
    let reduced = separatrix::model::reduce_1d(&p)?;
    let density = stationary_density_1d(&reduced, b1, sigma, DENSITY_U_MAX, DENSITY_NODES)?;
    let system = SdeSystem::phyto(p)?;
    let eqs = find_equilibria(&params(cfg, b1, 0.0), &default_domain_2d(), 1e-10);
    let x0 = eqs
        .background()
        .ok_or_else(|| {
            CliError::Compute(separatrix::Error::NotBistable(format!("no background state at b1 = {b1}")))
        })?
        .state;
    let sim = SimConfig::new(1e-2, 60_000.0, cfg.output.seed, 1);
    let hists = stationary_histogram(&system, &x0, &sim, 1000.0, 60)?;
    let rows: Vec<Vec<String>> = density
        .u_grid
        .iter()
        .zip(&density.p)
        .map(|(&u, &p)| vec![num(u), num(p)])
        .collect();
    write_csv(
        &ctx.path("marginal_fpe_u.csv"),
        &ctx.header("marginals"),
        &["u", "density"],
        &rows,
    )?;
    let mut rows = Vec::new();
    for (axis, hist) in ["T", "u"].iter().zip(&hists) {
        for k in 0..hist.mass.len() {
            rows.push(vec![
                axis.to_string(),
                num(hist.lo + k as f64 * hist.bin_width()),
                num(hist.lo + (k + 1) as f64 * hist.bin_width()),
                num(hist.mass[k]),
            ]);
        }
    }
    write_csv(
        &ctx.path("marginal_histograms.csv"),
        &ctx.header("marginals"),
        &["axis", "bin_left", "bin_right", "mass"],
        &rows,
    )?;
    if ctx.svg {
        let series = vec![Series {
            label: format!("p(u), sigma={sigma}"),
            points: density
                .u_grid
                .iter()
                .zip(&density.p)
                .map(|(&x, &y)| (x, Some(y)))
                .collect(),
        }];
        write_svg(&ctx.path("marginals.svg"), "stationary marginal of u", &series)?;
    }
    println!("marginals: density over {} nodes written", density.u_grid.len());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CellKey<'a> {
    what: &'a str,
    b1: f64,
    sigma: f64,
    grid_n: [usize; 2],
    padding: f64,
    delta: f64,
    kappa: f64,
    sigma_t_ratio: f64,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct CachedCell {
    record: SweepRecord,
    gamma: Vec<[f64; 2]>,
}

fn cell_key<'a>(opts: &SweepOptions, sigma: f64) -> CellKey<'a> {
    CellKey {
        what: "cell",
        b1: opts.b1,
        sigma,
        grid_n: opts.grid_n,
        padding: opts.padding,
        delta: opts.delta,
        kappa: opts.kappa,
        sigma_t_ratio: opts.sigma_t_ratio,
        alpha: opts.alpha,
    }
}

/// Committor/MFPT cell solve through the content-hash cache.
fn cached_cell(
    cache: &Cache,
    opts: &SweepOptions,
    sigma: f64,
) -> Result<(SweepRecord, Polyline), CliError> {
    let key = cache.key(&cell_key(opts, sigma));
    if let Some(hit) = cache.get::<CachedCell>(&key) {
        let gamma = Polyline::new(hit.gamma)?;
        return Ok((hit.record, gamma));
    }
    let (record, gamma) = solve_cell(opts, sigma)?;
    cache.put(
        &key,
        &CachedCell { record: record.clone(), gamma: gamma.vertices().to_vec() },
    )?;
    Ok((record, gamma))
}

/// `separatrix`: stochastic vs deterministic separatrix at one (b1, σ).
pub fn separatrix_cmd(ctx: &Ctx, b1: f64, sigma: f64) -> Result<(), CliError> {
    let cache = Cache::new(&ctx.out_dir);
    let opts = ctx.config.sweep_options(b1);
    let (record, gamma) = cached_cell(&cache, &opts, sigma)?;
    let domain = opts.domain();
    let h = domain.extent(0) / (opts.grid_n[0] - 1) as f64;
    let det = deterministic_separatrix(&opts.params(0.0), &domain, h)?;
    let mut rows = Vec::new();
    for (label, line) in [("stochastic", &gamma), ("deterministic", &det)] {
        for v in line.vertices() {
            rows.push(vec![label.to_string(), num(v[0]), num(v[1])]);
        }
    }
    write_csv(
        &ctx.path("separatrix.csv"),
        &ctx.header("separatrix"),
        &["curve", "T", "u"],
        &rows,
    )?;
    write_json(&ctx.path("separatrix.json"), &ctx.header("separatrix"), &record)?;
    if ctx.svg {
        let series = vec![
            Series {
                label: format!("q = 1/2, sigma={sigma}"),
                points: gamma.vertices().iter().map(|v| (v[0], Some(v[1]))).collect(),
            },
            Series {
                label: "deterministic".into(),
                points: det.vertices().iter().map(|v| (v[0], Some(v[1]))).collect(),
            },
        ];
        write_svg(&ctx.path("separatrix.svg"), "separatrices", &series)?;
    }
    println!(
        "separatrix: EWS_geom = {:.6}, log tau = {:.4}",
        record.ews_geom, record.log_tau_fdm
    );
    Ok(())
}

fn record_rows(records: &[SweepRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                num(r.b1),
                num(r.sigma),
                num(r.ews_geom),
                opt_num(r.mdb),
                opt_num(r.mds),
                num(r.log_tau_fdm),
                opt_num(r.log_tau_mc),
                opt_num(r.mc_se),
                opt_num(r.log10_var),
                opt_num(r.ac1),
                r.flags.join(";"),
            ]
        })
        .collect()
}

const RECORD_COLUMNS: [&str; 11] = [
    "b1", "sigma", "ews_geom", "mdb", "mds", "log_tau_fdm", "log_tau_mc", "mc_se", "log10_var",
    "ac1", "flags",
];

/// `indicators`: b1-scan of EWS_geom (plus MDB/MDS and variance/AC1 when
/// enabled) with BIC breakpoints per σ.
pub fn indicators(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let opts = IndicatorSweepOptions {
        b1_grid: cfg.sweep.b1_grid.values(),
        sigmas: cfg.sweep.indicator_sigmas.clone(),
        grid_n: cfg.grid.n,
        delta: cfg.model.delta,
        kappa: cfg.regions.kappa,
        alpha: cfg.regions.alpha,
        with_distances: true,
        with_timeseries: cfg.timeseries.enabled,
        protocol: cfg.protocol(cfg.output.seed),
    };
    let records = indicator_sweep(&opts)?;
    write_csv(
        &ctx.path("indicators.csv"),
        &ctx.header("indicators"),
        &RECORD_COLUMNS,
        &record_rows(&records),
    )?;
    let mut breakpoints = serde_json::Map::new();
    let ews_bps = breakpoints_by_sigma(&records, |r| Some(r.ews_geom))?;
    breakpoints.insert("ews_geom".into(), serde_json::to_value(&ews_bps).unwrap());
    if cfg.timeseries.enabled {
        if let Ok(bps) = breakpoints_by_sigma(&records, |r| r.log10_var) {
            breakpoints.insert("log10_var".into(), serde_json::to_value(&bps).unwrap());
        }
        if let Ok(bps) = breakpoints_by_sigma(&records, |r| r.ac1) {
            breakpoints.insert("ac1".into(), serde_json::to_value(&bps).unwrap());
        }
    }
    write_json(&ctx.path("breakpoints.json"), &ctx.header("indicators"), &breakpoints)?;
    if ctx.svg {
        let series: Vec<Series> = cfg
            .sweep
            .indicator_sigmas
            .iter()
            .map(|&sigma| Series {
                label: format!("EWS_geom, sigma={sigma}"),
                points: records
                    .iter()
                    .filter(|r| r.sigma == sigma)
                    .map(|r| {
                        let gap = r.flags.iter().any(|f| f == "gap") || !r.ews_geom.is_finite();
                        (r.b1, (!gap).then_some(r.ews_geom))
                    })
                    .collect(),
            })
            .collect();
        write_svg(&ctx.path("indicators.svg"), "EWS_geom vs b1", &series)?;
    }
    for (sigma, h) in &ews_bps {
        println!(
            "indicators: sigma={sigma} EWS_geom breakpoint {:.4} [{:.4}, {:.4}]",
            h.breakpoint, h.interval.0, h.interval.1
        );
    }
    Ok(())
}

/// `scaling`: fixed-b1 σ sweep, the three fits, and (optionally) Monte Carlo
/// cross-validation.
pub fn scaling(ctx: &Ctx, b1: f64) -> Result<(), CliError> {
    let cache = Cache::new(&ctx.out_dir);
    let mut opts = ctx.config.sweep_options(b1);
    opts.with_distances = true;
    let cells: Vec<Result<(SweepRecord, Polyline), CliError>> = opts
        .sigmas
        .par_iter()
        .map(|&sigma| cached_cell(&cache, &opts, sigma))
        .collect();
    let mut records = Vec::with_capacity(cells.len());
    let mut gammas = Vec::with_capacity(cells.len());
    for cell in cells {
        let (rec, gamma) = cell?;
        records.push(rec);
        gammas.push(gamma);
    }
    // distances against the deterministic and σ_ref separatrices
    let domain = opts.domain();
    let h = domain.extent(0) / (opts.grid_n[0] - 1) as f64;
    let det = deterministic_separatrix(&opts.params(0.0), &domain, h)?;
    let ref_idx = opts
        .sigmas
        .iter()
        .position(|&s| s == separatrix::analysis::SIGMA_REF)
        .unwrap_or(0);
    for (k, rec) in records.iter_mut().enumerate() {
        rec.mdb = Some(separatrix::geometry::curve_distance(&gammas[k], &det));
        rec.mds = Some(separatrix::geometry::curve_distance(&gammas[k], &gammas[ref_idx]));
    }
    if ctx.config.mc.enabled {
        let rows = mc_agreement(&opts, ctx.config.output.seed)?;
        for (rec, row) in records.iter_mut().zip(&rows) {
            rec.log_tau_mc = Some(row.tau_mc.ln());
            rec.mc_se = Some(row.mc_se);
        }
        write_json(&ctx.path("mc_agreement.json"), &ctx.header("scaling"), &rows)?;
    }
    let report = scaling_pipeline(&records)?;
    let validity = validity_check(&records)?;
    write_csv(
        &ctx.path("scaling.csv"),
        &ctx.header("scaling"),
        &RECORD_COLUMNS,
        &record_rows(&records),
    )?;
    write_json(
        &ctx.path("scaling.json"),
        &ctx.header("scaling"),
        &serde_json::json!({ "report": report, "validity": validity }),
    )?;
    if ctx.svg {
        let series = vec![Series {
            label: "log tau vs 1/EWS^2".into(),
            points: records
                .iter()
                .map(|r| (1.0 / (r.ews_geom * r.ews_geom), Some(r.log_tau_fdm)))
                .collect(),
        }];
        write_svg(&ctx.path("scaling.svg"), "geometric-temporal scaling", &series)?;
    }
    println!(
        "scaling: delta={:.6e} K={:.6} c2_fit={:.6e} c2_pred={:.6e} rel_err={:.4} sigma_max={}",
        report.delta, report.k_coef, report.c2_fit, report.c2_pred, report.rel_err,
        report.sigma_max
    );
    Ok(())
}

/// `robustness`: the perturbation table of the scaling fit.
pub fn robustness(ctx: &Ctx, b1: f64) -> Result<(), CliError> {
    let base = ctx.config.sweep_options(b1);
    let rows = robustness_suite(&base)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                opt_num(r.slope_change_pct),
                opt_num(r.r_squared),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &ctx.path("robustness.csv"),
        &ctx.header("robustness"),
        &["variation", "slope_change_pct", "r_squared", "error"],
        &csv_rows,
    )?;
    for r in &rows {
        println!(
            "robustness: {} slope change {} R2 {}",
            r.label,
            opt_num(r.slope_change_pct),
            opt_num(r.r_squared)
        );
    }
    Ok(())
}

/// `schlogl`: the 1D end-to-end verification.
pub fn schlogl(ctx: &Ctx) -> Result<(), CliError> {
    let opts = SchloglOptions { sigmas: ctx.config.sweep.sigmas.values(), ..Default::default() };
    let records = schlogl_sweep(&opts)?;
    let report = scaling_pipeline(&records)?;
    write_csv(
        &ctx.path("schlogl.csv"),
        &ctx.header("schlogl"),
        &RECORD_COLUMNS,
        &record_rows(&records),
    )?;
    write_json(&ctx.path("schlogl.json"), &ctx.header("schlogl"), &report)?;
    println!(
        "schlogl: delta={:.8} K={:.6} c2_fit={:.8} c2_pred={:.8} rel_err={:.4}",
        report.delta, report.k_coef, report.c2_fit, report.c2_pred, report.rel_err
    );
    Ok(())
}

/// Shared output-directory setup.
pub fn prepare(ctx: &Ctx) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;
    Ok(())
}
