use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use locstat::cli::{execute, RunConfig, Subcommand, SCHEMA_HELP};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Moments,
    Estimate,
    Lln,
    Clt,
    Coupling,
    Lipschitz,
    ValidateKernel,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Subcommand::Simulate,
            Command::Moments => Subcommand::Moments,
            Command::Estimate => Subcommand::Estimate,
            Command::Lln => Subcommand::Lln,
            Command::Clt => Subcommand::Clt,
            Command::Coupling => Subcommand::Coupling,
            Command::Lipschitz => Subcommand::Lipschitz,
            Command::ValidateKernel => Subcommand::ValidateKernel,
        }
    }
}

/// Simulation and localized moment inference for locally stationary
/// Levy-driven state space models.
#[derive(Debug, Parser)]
#[command(version, after_long_help = SCHEMA_HELP)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `{subcommand}-{seed}.csv` and `.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "LOCSTAT_WORKERS", default_value_t = 0)]
    workers: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let run = RunConfig {
        subcommand: args.command.into(),
        config_path: args.config,
        seed: args.seed,
        output_dir: args.out,
        workers: args.workers,
    };
    match execute(&run) {
        Ok(outcome) => {
            println!(
                "{}: {} ({}, {})",
                run.subcommand,
                if outcome.pass { "pass" } else { "FAIL" },
                outcome.csv.display(),
                outcome.json.display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
