//! `vesim` command-line driver.
//!
//! Exit codes: 0 success or reported findings, 1 numerical divergence or a
//! failed check, 2 usage or configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use vesim_core::dynamics::Scheme;
use vesim_core::presets::Preset;

pub mod commands;
pub mod config;
pub mod plot;

use config::IcParams;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {key}: {reason}")]
    Config { key: String, reason: String },
    #[error("numerical divergence: {0}")]
    Diverged(String),
    #[error("check failed: {0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Diverged(_) | CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<vesim_core::snapshot::SnapshotError> for CliError {
    fn from(e: vesim_core::snapshot::SnapshotError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "vesim", version, about = "Pseudo-spectral viscoelastic flow simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manufacture admissible initial data and write it as snapshots.
    GenIc(GenIcArgs),
    /// Integrate the incompressible system with full diagnostics.
    Run(RunArgs),
    /// Check constraint residuals and tensor identities of a snapshot pair.
    Verify(VerifyArgs),
    /// Sweep the compressible system over stiffness parameters.
    Limit(LimitArgs),
    /// Render CSV columns as an SVG line plot.
    Plot(PlotArgs),
    /// Audit the energy law over a diagnostics CSV.
    Audit(AuditArgs),
}

/// Initial-data generator overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct IcArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pseudo-time of the strain transport (0 gives zero strain).
    #[arg(long)]
    pub s_end: Option<f64>,
    /// RK4 steps of the strain transport.
    #[arg(long)]
    pub steps: Option<usize>,
    /// RMS speed of random velocity fields.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub peak_k: Option<u32>,
    #[arg(long)]
    pub decay: Option<f64>,
    /// Target ‖v‖²_H2 + ‖E‖²_H2 for small-data.
    #[arg(long)]
    pub target_h2: Option<f64>,
    /// Residual tolerance for manufactured data.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

impl IcArgs {
    pub fn apply(&self, p: &mut IcParams) {
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.s_end {
            p.s_end = v;
        }
        if let Some(v) = self.steps {
            p.steps = v;
        }
        if let Some(v) = self.amplitude {
            p.amplitude = v;
        }
        if let Some(v) = self.peak_k {
            p.peak_k = v;
        }
        if let Some(v) = self.decay {
            p.decay = v;
        }
        if let Some(v) = self.target_h2 {
            p.target_h2 = v;
        }
        if let Some(v) = self.tolerance {
            p.tolerance = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct GenIcArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "taylor-green")]
    pub preset: Preset,
    /// Viscosity used to pair velocity and strain (small-data).
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value = "ic")]
    pub out: PathBuf,
    #[command(flatten)]
    pub ic: IcArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Fixed time step; omit for the CFL-limited step.
    #[arg(long, conflicts_with = "cfl")]
    pub dt: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    #[arg(long)]
    pub dt_max: Option<f64>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Preset name or a directory holding v0.vesf and E0.vesf.
    #[arg(long)]
    pub ic: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub diag_every: Option<usize>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Constant C of the smallness thresholds.
    #[arg(long)]
    pub c_threshold: Option<f64>,
    #[arg(long)]
    pub drift_budget: Option<f64>,
    #[arg(long)]
    pub blowup_ceiling: Option<f64>,
    /// Freeze the strain and drop the elastic stress.
    #[arg(long)]
    pub fluid_only: bool,
    /// Disable two-thirds dealiasing.
    #[arg(long)]
    pub no_dealias: bool,
    #[command(flatten)]
    pub ic_args: IcArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory holding v0.vesf and E0.vesf.
    #[arg(long, required_unless_present_all = ["v", "e"])]
    pub dir: Option<PathBuf>,
    #[arg(long, requires = "e", conflicts_with = "dir")]
    pub v: Option<PathBuf>,
    #[arg(long, requires = "v", conflicts_with = "dir")]
    pub e: Option<PathBuf>,
    #[arg(long, default_value_t = vesim_core::constraints::DEFAULT_MANUFACTURE_TOL)]
    pub tol: f64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t_win: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta0: f64,
    /// Sobolev order of the energy E_s.
    #[arg(long, default_value_t = 4)]
    pub s: u32,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub reference_dt: f64,
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Incompressible initial data (preset name or directory).
    #[arg(long, default_value = "small-data")]
    pub ic: String,
    #[arg(long, default_value = "limit")]
    pub out: PathBuf,
    #[command(flatten)]
    pub ic_args: IcArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub csv: PathBuf,
    /// Comma-separated y columns.
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    #[arg(long, default_value = "t")]
    pub x: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Logarithmic y axis.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    pub csv: PathBuf,
    /// Relative tolerance on the cumulative energy drift.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VESIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| CliError::Config {
        key: "VESIM_THREADS".into(),
        reason: format!("must be a positive integer, got '{raw}'"),
    })?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::GenIc(a) => commands::gen_ic(&a),
        Command::Run(a) => commands::run(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Limit(a) => commands::limit(&a),
        Command::Plot(a) => commands::plot(&a),
        Command::Audit(a) => commands::audit(&a),
    }
}

/// Parse `args`, execute, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
