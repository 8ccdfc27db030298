//! `udae`: dataset generation, training, restoration, evaluation and
//! benchmarking from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use udae::degrade::{Preset, Split};

#[derive(Parser, Debug)]
#[command(name = "udae", about = "Underwater image restoration with a U-Net denoising autoencoder")]
struct Cli {
    /// JSON file whose keys supply flag values (command-line flags take precedence)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic clean/distorted pairs and a manifest
    GenData(GenDataArgs),
    /// Train a model on a generated dataset
    Train(TrainArgs),
    /// Restore every image in a directory
    Restore(RestoreArgs),
    /// Score a model on one split of a dataset
    Evaluate(EvaluateArgs),
    /// Measure forward-pass throughput
    Bench(BenchArgs),
    /// Finite-difference check of the network gradient
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct GenDataArgs {
    /// Directory of clean PNG/JPEG images; procedural scenes when omitted
    #[arg(long)]
    clean_dir: Option<PathBuf>,
    /// Output directory for pairs and manifest.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Side length of the square output images
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// greenish, bluish, turbid or mixed
    #[arg(long, default_value = "mixed")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct TrainArgs {
    /// Dataset directory written by gen-data
    #[arg(long)]
    data: PathBuf,
    /// Output directory for model.udae, loss curves and checkpoints
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint; its .udas sidecar must sit next to it
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    base: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    adam_beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    adam_beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    adam_eps: f64,
    /// Weight of the MS-SSIM term in the loss
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Save a checkpoint every N epochs (0 disables)
    #[arg(long, default_value_t = 1)]
    checkpoint_every: usize,
    /// Seeds weight initialisation and data order
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct RestoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    /// Checkpoint to score
    #[arg(long, required_unless_present = "identity", conflicts_with = "identity")]
    model: Option<PathBuf>,
    /// Score the distorted images themselves instead of a model
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Directory for metrics.json and metrics.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Add forward-pass timing to the report (makes it run-dependent)
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct BenchArgs {
    /// Checkpoint to time; a freshly initialised model otherwise
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    base: usize,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 4)]
    images: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    /// Hardware description recorded in the report; detected when omitted
    #[arg(long)]
    hardware: Option<String>,
    /// Write the report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 2)]
    base: usize,
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    /// Largest acceptable relative error
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn version_text() -> String {
    format!(
        "{} (rev {}, {} build, target {}, {} kernels)",
        env!("CARGO_PKG_VERSION"),
        env!("UDAE_GIT_REV"),
        env!("UDAE_PROFILE"),
        env!("UDAE_TARGET"),
        if cfg!(feature = "parallel") { "parallel" } else { "sequential" },
    )
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("UDAE_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .map_err(|_| anyhow::anyhow!("UDAE_THREADS must be a positive integer, got {value:?}"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    #[cfg(not(feature = "parallel"))]
    if n != 1 {
        log::warn!("built without the parallel feature; ignoring UDAE_THREADS={n}");
    }
    Ok(())
}

fn run() -> anyhow::Result<ExitCode> {
    let args = config::expand(std::env::args().collect())?;
    let version: &'static str = Box::leak(version_text().into_boxed_str());
    let matches = Cli::command().version(version).get_matches_from(args);
    let cli = Cli::from_arg_matches(&matches)?;
    init_threads()?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Restore(a) => commands::restore(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
