use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dirmix::bench::{cmd_bench, cmd_estimate, cmd_optimize, cmd_verify_moments, ExperimentConfig, Failure};

const THREADS_ENV: &str = "DIRMIX_THREADS";

#[derive(Parser)]
#[command(name = "dirmix", version, about = "Dirichlet-mixture gradient estimation and simplex optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: $DIRMIX_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the moment conditions of a mixture analytically and by sampling.
    VerifyMoments,
    /// Run gradient estimators over a parameter grid.
    Estimate,
    /// Run FWSA or MDSA trials.
    Optimize,
    /// Fit variance-scaling slopes and compare estimators.
    Bench,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(Failure::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.to_string_lossy().into_owned();
    }
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Failure::Config(dirmix::error::Error::InvalidConfig(format!("{THREADS_ENV}={v:?} is not a count")))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Config(dirmix::error::Error::InvalidConfig(e.to_string())))?;
    }
    let result = match cli.command {
        Command::VerifyMoments => cmd_verify_moments(&cfg),
        Command::Estimate => cmd_estimate(&cfg),
        Command::Optimize => cmd_optimize(&cfg),
        Command::Bench => cmd_bench(&cfg),
    }?;
    let files = result.outputs.write_to(cfg.output.as_ref()).map_err(Failure::Runtime)?;
    match result.failure {
        Some(f) => Err(f),
        None => Ok(files),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(files) => {
            if !cli.quiet {
                for f in files {
                    println!("{}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("dirmix: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
