//! `noisytug`: runs experiment configs and lists the built-in catalog.

mod catalog;
mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use output::OutputDir;
use run::RunError;

#[derive(Parser)]
#[command(name = "noisytug", version, about = "Tug-of-war with noise experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a catalog entry name.
    Run {
        config: String,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in experiments.
    List,
}

fn load(config: &str) -> Result<ExperimentConfig, ConfigError> {
    let path = Path::new(config);
    if !path.exists() {
        if let Some(text) = catalog::source(config) {
            return config::parse(text);
        }
    }
    config::load(path)
}

/// `NOISYTUG_THREADS` wins over the config's `threads`; 0 means all cores.
fn configure_threads(cfg: &ExperimentConfig) -> Result<(), String> {
    let threads = match std::env::var("NOISYTUG_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("NOISYTUG_THREADS must be a non-negative integer, got {s:?}"))?,
        Err(_) => cfg.threads,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(config: &str, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match load(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Err(e) = configure_threads(&cfg) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let dir = out.unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let result = OutputDir::create(&dir)
        .map_err(RunError::from)
        .and_then(|mut out| run::run(&cfg, &mut out).map(|()| out));
    match result {
        Ok(out) => {
            for path in out.written() {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn list() -> ExitCode {
    for cfg in catalog::entries() {
        println!("{:<26} {:<16} {}", cfg.name, cfg.experiment.kind(), cfg.anchor);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::List => list(),
    }
}
