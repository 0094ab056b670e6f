//! Run configuration: a TOML file with nested sections, all optional, plus
//! command-line overrides. The resolved configuration is hashed (SHA-256 of
//! its canonical JSON form) and stamped into every output header so results
//! are traceable to their exact settings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use separatrix::analysis::{default_b1_scan, default_sigmas, SweepOptions};
use separatrix::indicators::EwsProtocol;

/// Either an explicit list of values or an inclusive arithmetic range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range { start, stop, step } => {
                let n = ((stop - start) / step).round() as usize;
                (0..=n).map(|k| start + step * k as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub b1: f64,
    pub delta: f64,
    pub sigma_t_ratio: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { b1: 2.1, delta: 1e-4, sigma_t_ratio: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: [usize; 2],
    pub padding: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: [141, 141], padding: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSection {
    pub kappa: f64,
    pub alpha: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        RegionSection { kappa: 1.0, alpha: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sigmas: GridSpec,
    pub b1_grid: GridSpec,
    /// Noise levels for the bifurcation diagram and the indicator curves.
    pub indicator_sigmas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sigmas: GridSpec::List(default_sigmas()),
            b1_grid: GridSpec::List(default_b1_scan()),
            indicator_sigmas: vec![0.005, 0.010, 0.020],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    /// Attach Monte Carlo cross-validation to `scaling` runs.
    pub enabled: bool,
}

impl Default for McSection {
    fn default() -> Self {
        McSection { enabled: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeseriesSection {
    /// Attach variance/AC1 conditional-sampling indicators to `indicators`
    /// runs.
    pub enabled: bool,
    pub t_sim: f64,
    pub t_tr: f64,
    pub dt: f64,
    pub dt_obs: f64,
    pub n_ens: usize,
}

impl Default for TimeseriesSection {
    fn default() -> Self {
        let p = EwsProtocol::default();
        TimeseriesSection {
            enabled: false,
            t_sim: p.t_sim,
            t_tr: p.t_tr,
            dt: p.dt,
            dt_obs: p.dt_obs,
            n_ens: p.n_ens,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub seed: u64,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), seed: 12345, svg: false }
    }
}

/// The full resolved run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub regions: RegionSection,
    pub sweep: SweepSection,
    pub mc: McSection,
    pub timeseries: TimeseriesSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// SHA-256 over the canonical JSON form of the scientific configuration
    /// (everything except the output location), hex-encoded (first 16 bytes).
    /// Reruns into different directories keep the same hash and therefore
    /// produce byte-identical artifacts.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = String::new();
        canonical.output.svg = false;
        let json = serde_json::to_string(&canonical).expect("config is always serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// σ-sweep options at one b1.
    pub fn sweep_options(&self, b1: f64) -> SweepOptions {
        SweepOptions {
            b1,
            sigmas: self.sweep.sigmas.values(),
            grid_n: self.grid.n,
            padding: self.grid.padding,
            delta: self.model.delta,
            kappa: self.regions.kappa,
            sigma_t_ratio: self.model.sigma_t_ratio,
            alpha: self.regions.alpha,
            with_distances: false,
        }
    }

    pub fn protocol(&self, seed: u64) -> EwsProtocol {
        EwsProtocol {
            t_sim: self.timeseries.t_sim,
            t_tr: self.timeseries.t_tr,
            dt: self.timeseries.dt,
            dt_obs: self.timeseries.dt_obs,
            n_ens: self.timeseries.n_ens,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sweep.sigmas.values().is_empty() {
            return Err("sweep.sigmas is empty".into());
        }
        if self.sweep.b1_grid.values().is_empty() {
            return Err("sweep.b1_grid is empty".into());
        }
        if self.grid.n.iter().any(|&n| n < 3) {
            return Err("grid.n axes must have at least 3 nodes".into());
        }
        if !(self.model.delta > 0.0) {
            return Err("model.delta must be positive".into());
        }
        Ok(())
    }
}
