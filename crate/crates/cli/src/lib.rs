//! Command-line surface for zero-shot trace reconstruction.

pub mod benchmark;
pub mod config;
pub mod error;
mod evaluate;
mod reconstruct;
mod simulate;
mod training;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;
pub use training::TrainArgs;

#[derive(Debug, Parser)]
#[command(name = "zscl", version, about = "Reconstruct missing seismic traces with a self-consistent autoencoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zero a random fraction of traces and write the decimated gather and its mask.
    SimulateMissing(SimulateArgs),
    /// Fit a network to one gather and fill in its missing traces.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction against a reference gather.
    Evaluate(EvaluateArgs),
    /// Run both training objectives over seeds and decimation fractions.
    Benchmark(BenchmarkArgs),
    /// Write the synthetic benchmark scene.
    MakeScene(MakeSceneArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Input gather (.sgy/.segy or ZSG1 grid).
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mask file; defaults to `<out>.mask`.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    /// `key = value` settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub input: Option<PathBuf>,
    /// Mask file; without it, all-zero traces are treated as missing.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Save trained parameters (one file per tile when there are several).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub recon: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Write the report as CSV here as well as printing it.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Number of seeds per fraction.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// Missing fractions, comma separated.
    #[arg(long)]
    pub fractions: Option<String>,
    /// Objectives to run, comma separated (scl, traditional).
    #[arg(long)]
    pub arms: Option<String>,
    /// Gaussian noise added to the scene, relative to its peak amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Concurrent runs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeSceneArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Gaussian noise relative to the clean peak amplitude.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Run one parsed command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SimulateMissing(a) => simulate::run(a),
        Command::Reconstruct(a) => reconstruct::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Benchmark(a) => benchmark::run(a),
        Command::MakeScene(a) => {
            let seed = benchmark::NOISE_SEED_OFFSET + a.seed;
            let scene = zscl_core::synth::benchmark_scene(a.noise, seed)?;
            zscl_core::io::write_gather(&scene, &a.out)?;
            println!("wrote {}x{} scene -> {}", scene.n_samples(), scene.n_traces(), a.out.display());
            Ok(())
        }
    }
}

/// `<path><suffix>`, e.g. `out.zsg` → `out.zsg.manifest`.
pub(crate) fn with_suffix(path: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
