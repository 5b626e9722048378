//! `fedsmd`: clipped federated stochastic mirror descent experiment runner.
//!
//! Exit codes: 0 on success, 1 on configuration errors, 2 on runtime
//! assertion or audit failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedsmd_cli::config::{load_config, ExperimentConfig, SweepKind};
use fedsmd_cli::experiment::{run_audit, run_experiment, solve_report};
use fedsmd_cli::{CliError, Result};

/// Long-horizon round count enabled by `--full-scale`.
const FULL_SCALE_ROUNDS: u64 = 30_000;

#[derive(Parser)]
#[command(
    name = "fedsmd",
    version,
    about = "Clipped federated stochastic mirror descent simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the single configuration in the given config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's out_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Use the long-horizon setting instead of the desk-scale default.
        #[arg(long)]
        full_scale: bool,
    },
    /// Run the sweep declared in the config file (clients, period, tail_p).
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        full_scale: bool,
    },
    /// Diagnostic suites: clipped-oracle bounds, series stability, and a
    /// short strict-mode consensus audit.
    Audit { config: PathBuf },
    /// Print the optimum and instance constants for the configured problem.
    Solve { config: PathBuf },
}

fn effective_config(
    path: &PathBuf,
    out_dir: &Option<PathBuf>,
    full_scale: bool,
) -> Result<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(dir) = out_dir {
        cfg.out_dir = dir.clone();
    }
    if full_scale {
        cfg = fedsmd_cli::config::with_rounds(cfg, FULL_SCALE_ROUNDS)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            full_scale,
        } => {
            let cfg = effective_config(&config, &out_dir, full_scale)?;
            if cfg.sweep != SweepKind::None {
                return Err(CliError::Config(
                    "run executes a single configuration; use the sweep subcommand for sweeps"
                        .to_string(),
                ));
            }
            let out = cfg.out_dir.clone();
            let result = run_experiment(&cfg, &out)?;
            println!(
                "wrote {} summary rows and {} curve file(s) to {}",
                result.summary.len(),
                result.curves.len(),
                out.display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            out_dir,
            full_scale,
        } => {
            let cfg = effective_config(&config, &out_dir, full_scale)?;
            if cfg.sweep == SweepKind::None {
                return Err(CliError::Config(
                    "sweep requires the config to set sweep = clients|period|tail_p".to_string(),
                ));
            }
            let out = cfg.out_dir.clone();
            let result = run_experiment(&cfg, &out)?;
            println!(
                "wrote {} summary rows and {} curve file(s) to {}",
                result.summary.len(),
                result.curves.len(),
                out.display()
            );
            Ok(())
        }
        Command::Audit { config } => {
            let cfg = load_config(&config)?;
            let report = run_audit(&cfg)?;
            for line in &report.lines {
                println!("{line}");
            }
            if report.failures > 0 {
                return Err(CliError::Audit(format!(
                    "{} of {} checks failed",
                    report.failures,
                    report.lines.len()
                )));
            }
            Ok(())
        }
        Command::Solve { config } => {
            let cfg = load_config(&config)?;
            print!("{}", solve_report(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
