//! `bcs`: block compressive sensing from matrix generation to reconstruction.

mod commands;
mod sidecar;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for usage and validation failures.
pub const EXIT_USAGE: u8 = 2;
/// Exit status when data was produced with a different measurement matrix.
pub const EXIT_PROVENANCE: u8 = 3;
/// Exit status for numerical failures (non-finite values, divergence).
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "bcs", version, about = "Block compressive sensing: sampling, calibration and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a binary block measurement matrix (BCSM1).
    GenMatrix(GenMatrixArgs),
    /// Sample an image into a measurement tensor (BCSY1).
    Sample(SampleArgs),
    /// Simulate a single-pixel acquisition of a transmissive scene (BCSR1).
    SimulateAcquire(SimulateArgs),
    /// Turn raw detector voltages into a calibrated measurement tensor.
    Calibrate(CalibrateArgs),
    /// Train a reconstruction network on an image corpus.
    Train(TrainArgs),
    /// Reconstruct an image from a measurement tensor.
    Reconstruct(ReconstructArgs),
    /// Score reconstructions against references (PSNR, SSIM).
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenMatrixArgs {
    /// Block side B.
    #[arg(long, default_value_t = 4)]
    pub block: usize,
    /// Sampling ratio; must be a multiple of 1/B².
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, env = "BCS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// PGM or PNG image; colour is converted to luminance.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Transmittance image of the target.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Additive dark offset in volts.
    #[arg(long, default_value_t = 0.0)]
    pub dark: f64,
    /// Standard deviation of Gaussian read noise in volts.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, env = "BCS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum per-pixel intensity (dark-subtracted volts); estimated from
    /// the embedded dark reading when omitted.
    #[arg(long, requires = "b")]
    pub a: Option<f64>,
    /// Maximum per-pixel intensity (dark-subtracted volts); estimated from
    /// the embedded all-ON reading when omitted.
    #[arg(long, requires = "a")]
    pub b: Option<f64>,
    /// Take `a = 0` (complete darkness) when estimating.
    #[arg(long)]
    pub assume_zero_dark: bool,
    /// Block grid as ROWSxCOLS; a square grid is inferred when omitted.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of PGM/PNG training images.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub plateau_factor: f64,
    #[arg(long, default_value_t = 5)]
    pub plateau_patience: usize,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 15)]
    pub early_stop_patience: usize,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Seed for shuffling, augmentation, the data split and initialization.
    #[arg(long, env = "BCS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Disable training-time augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 64)]
    pub upsample_channels: usize,
    /// Five comma-separated encoder widths.
    #[arg(long, default_value = "64,128,256,512,512", value_delimiter = ',')]
    pub encoder_channels: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Trained model artifact.
    #[arg(long, conflicts_with = "tv", required_unless_present = "tv")]
    pub artifact: Option<PathBuf>,
    /// Use total-variation minimization instead of a model.
    #[arg(long)]
    pub tv: bool,
    #[arg(long)]
    pub tensor: PathBuf,
    /// Measurement matrix; required with `--tv`.
    #[arg(long, required_if_eq("tv", "true"))]
    pub matrix: Option<PathBuf>,
    /// Output size as WIDTHxHEIGHT; defaults to the block grid times B.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub reconstruction: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "unknown")]
    pub method: String,
    #[arg(long, default_value = "unknown")]
    pub dataset: String,
    #[arg(long, default_value_t = 0.0)]
    pub ratio: f64,
}

impl Command {
    fn output(&self) -> &Path {
        match self {
            Command::GenMatrix(a) => &a.out,
            Command::Sample(a) => &a.out,
            Command::SimulateAcquire(a) => &a.out,
            Command::Calibrate(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Reconstruct(a) => &a.out,
            Command::Evaluate(a) => &a.out,
        }
    }
}

/// Creates the directory an output file will be written into.
fn create_output_dir(out: &Path) -> anyhow::Result<()> {
    match out.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .map_err(|e| anyhow::anyhow!("cannot create output directory {}: {e}", dir.display())),
        _ => Ok(()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use bcs_core::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Provenance(_)) => EXIT_PROVENANCE,
        Some(Error::Numerical(_)) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(err) = create_output_dir(cli.command.output()) {
        eprintln!("error: {err:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::GenMatrix(args) => commands::gen_matrix(&args),
        Command::Sample(args) => commands::sample(&args),
        Command::SimulateAcquire(args) => commands::simulate_acquire(&args),
        Command::Calibrate(args) => commands::calibrate(&args),
        Command::Train(args) => commands::train(&args),
        Command::Reconstruct(args) => commands::reconstruct(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
