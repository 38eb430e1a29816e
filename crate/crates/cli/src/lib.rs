//! Command-line front end: `kernel`, `upsilon`, `phase`, `fronts`,
//! `moments`, `simulate` and `validate`, each driven by a TOML run file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 validation failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "she-moments",
    version,
    about = "Second-moment bounds and simulation for the stochastic heat equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker-thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tables of k(t) and h_1(t) with a plot.
    Kernel,
    /// Υ(β) table and the three phase-transition conditions.
    Upsilon,
    /// Phase-transition verdict and thresholds.
    Phase,
    /// Growth indices of the intermittency front.
    Fronts,
    /// Two-point second-moment bounds.
    Moments,
    /// Monte Carlo simulation.
    Simulate,
    /// Monte Carlo against the analytic envelope.
    Validate,
}

/// Runs one command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let cfg = config::RunConfig::load(path)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))?;
    std::fs::create_dir_all(&out).map_err(output::io_err)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = commands::Context {
        cfg,
        out,
        seed: cli.seed,
        format: cli.format,
    };
    match cli.command {
        Command::Kernel => commands::cmd_kernel(&ctx),
        Command::Upsilon => commands::cmd_upsilon(&ctx),
        Command::Phase => commands::cmd_phase(&ctx),
        Command::Fronts => commands::cmd_fronts(&ctx),
        Command::Moments => commands::cmd_moments(&ctx),
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Validate => commands::cmd_validate(&ctx),
    }
}

/// Parses `args` (program name first), runs, reports errors on stderr and
/// returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
