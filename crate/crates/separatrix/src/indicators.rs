//! Classical time-series early-warning indicators (log variance and lag-1
//! autocorrelation of the biomass) under a conditional-sampling protocol, and
//! min–max score normalization.
//!
//! An ensemble of trajectories is started at the background state; only those
//! that never transition (never hit the bloom neighbourhood R_{E3}) during
//! the simulated window are retained, the rest are conditioning rejects —
//! once the mean first-passage time drops below the observation window the
//! retained sample dries up. When no trajectory survives, the (b1, σ) cell
//! is reported as a data gap rather than an error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SdeSystem;
use crate::pde::EllipseRegion;
use crate::simulate::{substream, Stepper};

/// Conditional-sampling protocol settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EwsProtocol {
    /// Total simulated time per ensemble member.
    pub t_sim: f64,
    /// Burn-in discarded before observation starts.
    pub t_tr: f64,
    /// Integration step.
    pub dt: f64,
    /// Observation sampling interval (downsampling).
    pub dt_obs: f64,
    /// Ensemble size.
    pub n_ens: usize,
    pub seed: u64,
}

impl Default for EwsProtocol {
    fn default() -> Self {
        EwsProtocol { t_sim: 4000.0, t_tr: 1000.0, dt: 1e-2, dt_obs: 1.0, n_ens: 50, seed: 0 }
    }
}

impl EwsProtocol {
    /// Observation count M per retained trajectory.
    pub fn n_obs(&self) -> usize {
        ((self.t_sim - self.t_tr) / self.dt_obs).round() as usize
    }
}

/// Ensemble-mean indicators for one (b1, σ) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleEwsResult {
    /// Mean over retained members of log10 sample variance of u.
    pub log10_var: f64,
    /// Mean lag-1 autocorrelation of u.
    pub ac1: f64,
    /// Retained (never transitioned, non-degenerate) member count.
    pub n_valid: usize,
    /// True when nothing was retained; the statistic fields are NaN then.
    pub gap: bool,
}

/// Unbiased sample variance (denominator M − 1).
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Lag-1 autocorrelation of the mean-removed series (Pearson convention).
/// None for a constant series.
pub fn lag1_autocorr(x: &[f64]) -> Option<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|&v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return None;
    }
    let num: f64 = (0..n - 1).map(|t| (x[t] - mean) * (x[t + 1] - mean)).sum();
    Some(num / denom)
}

/// Run the conditional-sampling protocol: `n_ens` trajectories from the
/// centre of `r_start` (the background neighbourhood), burn-in discarded,
/// the biomass observed every `dt_obs`; a member is retained only if it
/// never transitions — never enters `r_target` (the bloom neighbourhood) —
/// at any integration step of the run.
pub fn classic_ews(
    system: &SdeSystem,
    r_start: &EllipseRegion,
    r_target: &EllipseRegion,
    protocol: &EwsProtocol,
) -> Result<EnsembleEwsResult> {
    assert_eq!(system.dim(), 2, "the protocol observes the biomass of the 2D model");
    let n_steps = (protocol.t_sim / protocol.dt).round() as usize;
    let n_burn = (protocol.t_tr / protocol.dt).round() as usize;
    let stride = (protocol.dt_obs / protocol.dt).round() as usize;
    assert!(stride >= 1);
    let x0 = r_start.center.clone();
    let per_member: Vec<Result<Option<(f64, Option<f64>)>>> = (0..protocol.n_ens as u64)
        .into_par_iter()
        .map(|member| {
            let rng = substream(protocol.seed, member);
            let mut stepper = Stepper::new(system, &x0, protocol.dt, rng);
            let mut series = Vec::with_capacity(protocol.n_obs());
            for k in 1..=n_steps {
                let x = stepper.step()?;
                if r_target.contains(x) {
                    return Ok(None); // transitioned: conditioning reject
                }
                if k <= n_burn {
                    continue;
                }
                if (k - n_burn) % stride == 0 {
                    series.push(x[1]);
                }
            }
            if series.len() < 2 {
                return Ok(None);
            }
            let var = sample_variance(&series);
            Ok(Some((var, lag1_autocorr(&series))))
        })
        .collect();
    let mut log_vars = Vec::new();
    let mut ac1s = Vec::new();
    for m in per_member {
        if let Some((var, ac1)) = m? {
            match ac1 {
                Some(a) if var > 0.0 => {
                    log_vars.push(var.log10());
                    ac1s.push(a);
                }
                _ => {} // constant series: degenerate, counts as rejected
            }
        }
    }
    let n_valid = log_vars.len();
    if n_valid == 0 {
        return Ok(EnsembleEwsResult { log10_var: f64::NAN, ac1: f64::NAN, n_valid: 0, gap: true });
    }
    Ok(EnsembleEwsResult {
        log10_var: log_vars.iter().sum::<f64>() / n_valid as f64,
        ac1: ac1s.iter().sum::<f64>() / n_valid as f64,
        n_valid,
        gap: false,
    })
}

/// Min–max normalization over the non-gap (`Some`) entries; gaps preserved.
/// Returns the normalized sequence and a degeneracy warning flag (all values
/// equal → everything mapped to 0.5).
pub fn normalize_scores(series: &[Option<f64>]) -> Result<(Vec<Option<f64>>, bool)> {
    let vals: Vec<f64> = series.iter().filter_map(|v| *v).collect();
    if vals.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 non-gap values".into()));
    }
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok((series.iter().map(|v| v.map(|_| 0.5)).collect(), true));
    }
    let out = series.iter().map(|v| v.map(|x| (x - min) / (max - min))).collect();
    Ok((out, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn white_noise_autocorrelation_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ac1 = lag1_autocorr(&series).unwrap();
        assert!(ac1.abs() < 0.04, "AC1 = {ac1}");
    }

    #[test]
    fn constant_series_is_degenerate() {
        let series = vec![1.0; 100];
        assert_eq!(sample_variance(&series), 0.0);
        assert!(lag1_autocorr(&series).is_none());
    }

    #[test]
    fn variance_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v = sample_variance(&x);
        let mean = x.iter().sum::<f64>() / 500.0;
        let oracle: f64 = x.iter().map(|&a| (a - mean) * (a - mean)).sum::<f64>() / 499.0;
        assert!((v - oracle).abs() < 1e-14);
    }

    #[test]
    fn ar1_series_recovers_its_autocorrelation() {
        // AR(1) with φ = 0.7: AC1 → 0.7
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let series: Vec<f64> = (0..20000)
            .map(|_| {
                x = 0.7 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let ac1 = lag1_autocorr(&series).unwrap();
        assert!((ac1 - 0.7).abs() < 0.03, "AC1 = {ac1}");
    }

    #[test]
    fn normalize_scores_basics() {
        let (out, warn) =
            normalize_scores(&[Some(1.0), Some(2.0), Some(3.0)]).unwrap();
        assert_eq!(out, vec![Some(0.0), Some(0.5), Some(1.0)]);
        assert!(!warn);
        // idempotent on an already-[0,1] sequence attaining both ends
        let (again, _) = normalize_scores(&out).unwrap();
        assert_eq!(again, out);
        // gaps preserved
        let (gapped, _) = normalize_scores(&[Some(2.0), None, Some(4.0)]).unwrap();
        assert_eq!(gapped, vec![Some(0.0), None, Some(1.0)]);
        // degenerate
        let (flat, warn) = normalize_scores(&[Some(1.0), Some(1.0)]).unwrap();
        assert_eq!(flat, vec![Some(0.5), Some(0.5)]);
        assert!(warn);
        assert!(normalize_scores(&[Some(1.0), None]).is_err());
    }

    #[test]
    fn normalization_preserves_the_argmax() {
        let raw = vec![Some(3.0), Some(1.0), None, Some(7.0), Some(2.0)];
        let (out, _) = normalize_scores(&raw).unwrap();
        let argmax = |s: &[Option<f64>]| {
            s.iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|x| (i, x)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&raw), argmax(&out));
    }

    fn quick_protocol(seed: u64) -> EwsProtocol {
        EwsProtocol { t_sim: 600.0, t_tr: 100.0, dt: 1e-2, dt_obs: 1.0, n_ens: 20, seed }
    }

    fn regions(b1: f64) -> (SdeSystem, EllipseRegion, EllipseRegion) {
        use crate::model::{default_domain_2d, find_equilibria};
        use crate::pde::DEFAULT_SEMI_AXES_2D;
        let eq = find_equilibria(&ModelParams::with_b1_sigma(b1, 0.0), &default_domain_2d(), 1e-10);
        let e1 = eq.background().unwrap().state.to_vec();
        let e3 = eq.bloom().unwrap().state.to_vec();
        let axes = DEFAULT_SEMI_AXES_2D.to_vec();
        (
            SdeSystem::phyto(ModelParams::with_b1_sigma(b1, 0.0)).unwrap(),
            EllipseRegion::new(e1, axes.clone()),
            EllipseRegion::new(e3, axes),
        )
    }

    fn with_sigma(sys: &SdeSystem, sigma: f64) -> SdeSystem {
        use crate::model::SdeKind;
        let SdeKind::Phyto(p) = &sys.kind else { unreachable!() };
        SdeSystem::phyto(ModelParams { sigma_t: sigma, sigma_u: sigma, ..*p }).unwrap()
    }

    #[test]
    fn retention_is_non_increasing_in_noise() {
        let (sys0, r_start, r_target) = regions(2.1);
        let mut prev = usize::MAX;
        for sigma in [0.004, 0.012, 0.024] {
            let sys = with_sigma(&sys0, sigma);
            let res = classic_ews(&sys, &r_start, &r_target, &quick_protocol(3)).unwrap();
            assert!(res.n_valid <= prev, "retention rose at sigma {sigma}");
            prev = res.n_valid;
        }
    }

    #[test]
    fn weak_noise_ensemble_is_fully_retained_with_sane_statistics() {
        let (sys0, r_start, r_target) = regions(2.1);
        let sys = with_sigma(&sys0, 0.004);
        let res = classic_ews(&sys, &r_start, &r_target, &quick_protocol(4)).unwrap();
        assert!(!res.gap);
        assert_eq!(res.n_valid, 20, "no transitions expected at this noise level");
        assert!((-1.0..=1.0).contains(&res.ac1));
        assert!(res.log10_var < 0.0, "variance of a bounded small signal is ≪ 1");
    }

    #[test]
    fn strong_noise_produces_data_gaps() {
        // at high growth rate and strong noise every member transitions well
        // inside the window, so the cell is reported as a gap, not an error
        let (sys0, r_start, r_target) = regions(2.36);
        let sys = with_sigma(&sys0, 0.020);
        let protocol = EwsProtocol { t_sim: 3000.0, n_ens: 10, ..quick_protocol(3) };
        let res = classic_ews(&sys, &r_start, &r_target, &protocol).unwrap();
        assert!(res.gap);
        assert_eq!(res.n_valid, 0);
        assert!(res.log10_var.is_nan());
    }
}
