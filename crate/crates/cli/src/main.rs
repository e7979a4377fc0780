//! `ndnb`: simulate blocker kinetics, fit concentration-effect curves,
//! estimate model constants and run selectivity sweeps.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndnb::{Error, ModelKind};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, files or parameters.
    Config(String),
    /// The simulation or fit failed.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::UnsupportedModel(_)
            | Error::DimensionMismatch { .. }
            | Error::ParamFile(_) => CliError::Config(e.to_string()),
            Error::NegativeConcentration { .. }
            | Error::InconsistentEquilibrium(_)
            | Error::Integration { .. }
            | Error::ZeroControl
            | Error::NotBracketing
            | Error::InvalidCurve(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ndnb",
    version,
    about = "Neuromuscular blocker kinetics: simulation, Hill fits, estimation and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvPreset {
    InVivo,
    InVitro,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model structure: two-site, reciprocal or cyclic.
    #[arg(long, value_parser = parse_model, default_value = "cyclic")]
    pub model: ModelKind,
    /// Environment preset.
    #[arg(long, value_enum, default_value = "in-vivo")]
    pub env: EnvPreset,
    /// JSON parameter file; overrides --preset.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Built-in parameter set (table1, table3-two-site, table3-reciprocal,
    /// table3-cyclic). Defaults to the fitted set for --model.
    #[arg(long)]
    pub preset: Option<String>,
    /// Simulated time window (s).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Absolute tolerance (M).
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "ndnb-out")]
    pub out: PathBuf,
    /// Worker threads (default: logical CPU count).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one kinetic run and write per-species trajectories.
    TimeCourse {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cisatracurium")]
        drug: String,
        /// Clamped drug concentration (M).
        #[arg(long, default_value_t = 0.0)]
        d: f64,
    },
    /// Concentration-effect curve and its Hill fit for one drug.
    Curve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cisatracurium")]
        drug: String,
        /// Lowest grid concentration (M).
        #[arg(long, default_value_t = 1e-10)]
        grid_lo: f64,
        /// Highest grid concentration (M).
        #[arg(long, default_value_t = 1e-4)]
        grid_hi: f64,
        #[arg(long, default_value_t = 48)]
        points: usize,
    },
    /// Fit model constants to the reference potencies.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// JSON targets file (default: built-in reference data).
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Estimate separate drug off-rates for the two sites.
        #[arg(long)]
        untie_kdissd: bool,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[arg(long, default_value_t = 5)]
        max_restarts: usize,
    },
    /// Pharmacologic parameters over a selectivity by off-rate grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON plan file with optional `mu_grid`, `k_dissD_set`, `K_D1`.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 25)]
        mu_points: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::TimeCourse { common, .. }
        | Command::Curve { common, .. }
        | Command::Estimate { common, .. }
        | Command::Sweep { common, .. } => common,
    };
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::TimeCourse { common, drug, d } => commands::time_course(common, drug, *d),
        Command::Curve {
            common,
            drug,
            grid_lo,
            grid_hi,
            points,
        } => commands::curve(common, drug, *grid_lo, *grid_hi, *points),
        Command::Estimate {
            common,
            targets,
            untie_kdissd,
            max_iter,
            max_restarts,
        } => commands::estimate(common, targets.as_deref(), *untie_kdissd, *max_iter, *max_restarts),
        Command::Sweep {
            common,
            plan,
            mu_points,
        } => commands::sweep(common, plan.as_deref(), *mu_points),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ndnb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
