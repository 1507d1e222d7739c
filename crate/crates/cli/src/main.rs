use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emdm_cli::commands;
use emdm_cli::config::ExperimentConfig;
use emdm_cli::{CliError, CliResult};

/// Train score-based generative models directly from corrupted
/// measurements and evaluate them against clean data.
#[derive(Parser)]
#[command(name = "emdm", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the clean dataset.
    MakeData,
    /// Corrupt the clean dataset into measurements.
    Corrupt,
    /// Pretrain on the clean subset and run the EM loop.
    Run,
    /// Evaluate a checkpoint against measurements and the clean pool.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Dump unconditional samples from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of samples.
        #[arg(short, long, default_value_t = 64)]
        n: usize,
    },
}

fn load_config(args: &Args) -> CliResult<ExperimentConfig> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(args: &Args) -> CliResult<()> {
    let cfg = load_config(args)?;
    match &args.command {
        Command::MakeData => {
            let dir = commands::cmd_make_data(&cfg)?;
            println!("wrote clean data to {}", dir.display());
        }
        Command::Corrupt => {
            let dir = commands::cmd_corrupt(&cfg)?;
            println!("wrote measurements to {}", dir.display());
        }
        Command::Run => {
            let dir = commands::cmd_run(&cfg)?;
            println!("run artifacts in {}", dir.display());
        }
        Command::Eval { checkpoint } => {
            let dir = commands::cmd_eval(&cfg, checkpoint)?;
            println!("eval report in {}", dir.display());
        }
        Command::Sample { checkpoint, n } => {
            let dir = commands::cmd_sample(&cfg, checkpoint, *n)?;
            println!("samples in {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}
