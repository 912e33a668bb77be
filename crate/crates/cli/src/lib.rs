//! Command-line front end for the first-passage inverse solvers.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Command, ConfigError, Overrides};
use run::RunError;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "IFPT_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ifpt", version, about = "Boundaries from first-passage densities of Brownian motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (a directory for `bench`); overrides `[output] path`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides the one in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Recover a boundary from a first-passage density.
    Inverse(CommonArgs),
    /// Compute the first-passage distribution of a boundary.
    Direct(CommonArgs),
    /// Run a benchmark suite.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        suite: Option<String>,
    },
    /// Classify the small-time behaviour of a density or boundary.
    Limits {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Runs the command and returns the process exit code. The summary line goes
/// to `stdout`, notes and errors to `stderr`.
pub fn main_with(cli: Cli, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32 {
    if let Err(msg) = configure_threads() {
        let _ = writeln!(stderr, "error: {msg}");
        return EXIT_CONFIG;
    }
    let (command, path, overrides) = match cli.command {
        CliCommand::Inverse(c) => (Command::Inverse, c.config, overrides(c.out, c.seed, None)),
        CliCommand::Direct(c) => (Command::Direct, c.config, overrides(c.out, c.seed, None)),
        CliCommand::Bench { common: c, suite } => (Command::Bench, c.config, overrides(c.out, c.seed, suite)),
        CliCommand::Limits { config } => (Command::Limits, config, Overrides::default()),
    };
    let cfg = match config::load_config(&path, command, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return match e {
                ConfigError::Read { .. } => EXIT_IO,
                _ => EXIT_CONFIG,
            };
        }
    };
    match run::execute(&cfg) {
        Ok(outcome) => {
            for note in &outcome.notes {
                let _ = writeln!(stderr, "note: {note}");
            }
            let _ = writeln!(stdout, "{}", outcome.summary);
            EXIT_OK
        }
        Err(RunError::Numerical(e)) => {
            match e.knot() {
                Some(k) => {
                    let _ = writeln!(stderr, "error: numerical failure at knot {k}: {}", e.root_cause());
                }
                None => {
                    let _ = writeln!(stderr, "error: numerical failure: {e}");
                }
            }
            EXIT_NUMERICAL
        }
        Err(e @ RunError::Io { .. }) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_IO
        }
    }
}

fn overrides(out: Option<PathBuf>, seed: Option<u64>, suite: Option<String>) -> Overrides {
    Overrides { out, seed, suite }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
