//! `smoothcert` command-line interface.
//!
//! Subcommands: `train` (fit a base classifier and write a checkpoint),
//! `certify` (per-example certified radii plus accuracy curves), `attack`
//! (PGD robust-accuracy sweeps), and `compare-bounds` (radius comparison
//! against the differential-privacy baseline). All outputs are CSV with a
//! `# smoothcert v1` header line; every command is deterministic under its
//! seed. `SMOOTHCERT_THREADS` caps internal parallelism.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<smoothcert::Error> for CliError {
    fn from(e: smoothcert::Error) -> Self {
        use smoothcert::Error::*;
        match e {
            NumericalError(_) | TrainingDiverged { .. } | InfiniteRadius => {
                CliError::Numeric(e.to_string())
            }
            FormatError(_) | Io(_) => CliError::Data(e.to_string()),
            InvalidArgument(_) | Classifier { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "smoothcert", version, about = "Certified robustness via randomized smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a base classifier and write a checkpoint plus a metrics CSV.
    Train(TrainArgs),
    /// Certify a dataset and emit per-example records and accuracy curves.
    Certify(CertifyArgs),
    /// Run a PGD robust-accuracy sweep against a (smoothed) checkpoint.
    Attack(AttackArgs),
    /// Sweep the (p1, p2) grid comparing our radius with the DP baseline.
    CompareBounds(CompareBoundsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Blobs,
    Idx,
}

#[derive(Args)]
pub struct DatasetArgs {
    /// Dataset family: the built-in Gaussian-blob fixture or IDX files.
    #[arg(long, value_enum, default_value = "blobs")]
    pub dataset: DatasetKind,
    /// IDX image file (required when --dataset idx).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file (required when --dataset idx).
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON training config (exactly the TrainConfig fields).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Output checkpoint path.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output per-epoch metrics CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset generation seed (blobs).
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args)]
pub struct CertifyArgs {
    /// Checkpoint to certify.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Gaussian noise level; repeat for a sigma sweep.
    #[arg(long = "sigma")]
    pub sigmas: Vec<f64>,
    /// Laplacian noise scale (L1 certification) instead of --sigma.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Monte Carlo sample count per example.
    #[arg(long, default_value_t = 100)]
    pub n: u32,
    /// Overall confidence level of the certification.
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Seed for dataset generation and noise sampling.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Radii for the certified-accuracy curve, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L2,
    Linf,
}

#[derive(Args)]
pub struct AttackArgs {
    /// Checkpoint to attack.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Attack norm.
    #[arg(long, value_enum, default_value = "l2")]
    pub norm: NormArg,
    /// Attack budget; repeat for an epsilon sweep.
    #[arg(long = "epsilon")]
    pub epsilons: Vec<f64>,
    /// PGD iteration count (step size is 2.5 * epsilon / steps).
    #[arg(long, default_value_t = 40)]
    pub steps: u32,
    /// EOT gradient sample count.
    #[arg(long, default_value_t = 8)]
    pub eot: u32,
    /// Defender noise level; 0 evaluates the unsmoothed network.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Monte Carlo samples for the smoothed prediction.
    #[arg(long, default_value_t = 100)]
    pub n: u32,
    /// Confidence level carried by the smoothing config.
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Seed for dataset generation, attack, and prediction noise.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Independent PGD restarts.
    #[arg(long, default_value_t = 1)]
    pub restarts: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareBoundsArgs {
    /// Grid step for the (p1, p2) sweep.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Noise level both radii are evaluated at.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() {
    if let Ok(value) = std::env::var("SMOOTHCERT_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n > 0 {
                // ignore failure if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Train(args) => commands::train(&args),
        Command::Certify(args) => commands::certify(&args),
        Command::Attack(args) => commands::attack(&args),
        Command::CompareBounds(args) => commands::compare_bounds(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("smoothcert: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
