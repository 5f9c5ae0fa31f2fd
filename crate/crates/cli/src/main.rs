//! Batch front end: data generation, tree training, strength sweeps,
//! trajectory metrics and plot-ready reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;

/// Input or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_UNSTABLE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Demo,
    Boucwen,
}

#[derive(Parser)]
#[command(name = "lmssn", version, about = "Local model state space network identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test CSV files with JSON sidecars
    GenData {
        #[arg(value_enum)]
        generator: Generator,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Generator configuration (JSON with optional "process" and "excitation")
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Grow a model tree; writes model, run logs and a per-split summary
    Train(Overrides),
    /// Optimize the first split for every strength of a lambda grid
    Sweep {
        #[command(flatten)]
        ov: Overrides,
        /// Comma-separated strengths
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        lambdas: Option<Vec<f64>>,
    },
    /// Space-filling indicators of a point cloud CSV (unit-cube coordinates)
    Metrics {
        file: PathBuf,
        #[arg(long, default_value_t = 5)]
        grid_m: usize,
        /// Write JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Consolidated CSVs of a finished run directory
    Report { dir: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<lmssn::Error>() {
        Some(
            lmssn::Error::Divergence { .. }
            | lmssn::Error::NonFinite(_)
            | lmssn::Error::Unstable(..)
            | lmssn::Error::Singular(_)
            | lmssn::Error::IntegrationBlowUp { .. },
        ) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("LMSSN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not cap threads: {e}");
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData {
            generator,
            seed,
            out,
            config,
        } => commands::gen_data(generator, seed, &out, config.as_deref()),
        Command::Train(ov) => commands::train(&ov),
        Command::Sweep { ov, lambdas } => commands::sweep(&ov, lambdas),
        Command::Metrics { file, grid_m, out } => commands::metrics(&file, grid_m, out.as_deref()),
        Command::Report { dir } => commands::report(&dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
