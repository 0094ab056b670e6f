//! `separatrix` — committor, separatrix, indicator and passage-time sweeps
//! for the bistable plankton model, driven by a TOML run configuration.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "separatrix", version, about = "Stochastic separatrices and early-warning indicators for bistable SDEs")]
struct Cli {
    /// TOML run configuration (defaults apply if omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweep-level parallelism; results are identical
    /// for any value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Also emit SVG plots next to the CSV artifacts.
    #[arg(long, global = true)]
    svg: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibria and the deterministic bistable window.
    Equilibria {
        #[arg(long)]
        b1: Option<f64>,
    },
    /// Deterministic branches plus the expectation-centred stochastic
    /// bifurcation diagram.
    Bifurcation,
    /// Reduced stationary density vs a long-run simulated histogram.
    Marginals {
        #[arg(long)]
        b1: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Stochastic (q = 1/2) and deterministic separatrices at one (b1, σ).
    Separatrix {
        #[arg(long)]
        b1: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// b1 scan of the geometric indicator (and classic indicators when
    /// enabled) with BIC breakpoints.
    Indicators,
    /// Fixed-b1 σ sweep, scaling fits, optional Monte Carlo check.
    Scaling {
        #[arg(long)]
        b1: Option<f64>,
        /// Attach Monte Carlo cross-validation (slow).
        #[arg(long)]
        mc: bool,
    },
    /// Perturbation table for the scaling fit.
    Robustness {
        #[arg(long)]
        b1: Option<f64>,
    },
    /// 1D Schlögl model: full sweep plus scaling report.
    Schlogl,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output.dir = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        config.output.seed = seed;
    }
    if let Command::Scaling { mc: true, .. } = &cli.command {
        config.mc.enabled = true;
    }
    config.validate().map_err(CliError::Config)?;

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    }

    let svg = cli.svg || config.output.svg;
    let default_b1 = config.model.b1;
    let ctx = commands::Ctx::new(config, svg);
    commands::prepare(&ctx)?;

    match cli.command {
        Command::Equilibria { b1 } => commands::equilibria(&ctx, b1.unwrap_or(default_b1)),
        Command::Bifurcation => commands::bifurcation(&ctx),
        Command::Marginals { b1, sigma } => {
            commands::marginals(&ctx, b1.unwrap_or(default_b1), sigma.unwrap_or(0.01))
        }
        Command::Separatrix { b1, sigma } => {
            commands::separatrix_cmd(&ctx, b1.unwrap_or(default_b1), sigma.unwrap_or(0.005))
        }
        Command::Indicators => commands::indicators(&ctx),
        Command::Scaling { b1, .. } => commands::scaling(&ctx, b1.unwrap_or(default_b1)),
        Command::Robustness { b1 } => commands::robustness(&ctx, b1.unwrap_or(default_b1)),
        Command::Schlogl => commands::schlogl(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
