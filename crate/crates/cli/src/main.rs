//! Benchmark CLI for the diffusion-model channel estimator.

mod commands;
mod config;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Profile};

#[derive(Parser)]
#[command(
    name = "dmce",
    about = "Diffusion-model MIMO channel estimation benchmark driver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/validation/test channel datasets.
    GenData(CommonArgs),
    /// Train the diffusion prior on clean samples.
    Train(CommonArgs),
    /// Two-stage SURE training from noisy samples.
    TrainSure(CommonArgs),
    /// Run the (SNR, alpha, bits) x method grid and write a results CSV.
    Sweep(CommonArgs),
    /// Render SVG charts from a results CSV.
    Plot(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for datasets, checkpoints, and reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in parameter preset.
    #[arg(long, default_value = "desk")]
    profile: Profile,
}

impl CommonArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        std::fs::create_dir_all(&self.out)?;
        ExperimentConfig::load(self.profile, self.config.as_deref(), &self.out, self.seed)
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(args) => commands::gen_data(&args.load()?),
        Command::Train(args) => commands::train_dm(&args.load()?),
        Command::TrainSure(args) => commands::train_sure(&args.load()?),
        Command::Sweep(args) => commands::sweep(&args.load()?),
        Command::Plot(args) => commands::plot(&args.load()?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}")
                .replace('\\', "\\\\")
                .replace('"', "\\\"")
                .replace('\n', " ");
            eprintln!("{{\"error\":\"{message}\"}}");
            ExitCode::FAILURE
        }
    }
}
