use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invkit_cli::{commands, CliError, CliResult, Config};

/// Imaging inverse problems: simulate, reconstruct, train and benchmark.
#[derive(Debug, Parser)]
#[command(name = "invkit", version)]
struct Cli {
    /// TOML configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Applies the forward operator and noise to a raw image.
    Simulate { input: PathBuf },
    /// Reconstructs an image from a raw measurement file.
    Reconstruct {
        measurement: PathBuf,
        /// Ground truth for PSNR/SSIM.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Trains a model on a directory of x_*.ivk / y_*.ivk / xt_*.ivk files.
    Train { dataset: PathBuf },
    /// Runs the configured scenarios and robustness suites.
    Benchmark,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    cfg.resolve()?;
    let out = PathBuf::from(&cfg.output.dir);
    match &cli.command {
        Command::Simulate { input } => commands::simulate(&cfg, &out, input),
        Command::Reconstruct { measurement, truth } => commands::reconstruct(&cfg, &out, measurement, truth.as_deref()),
        Command::Train { dataset } => commands::train(&cfg, &out, dataset),
        Command::Benchmark => commands::benchmark(&cfg, Path::new(&out)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("invkit: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
