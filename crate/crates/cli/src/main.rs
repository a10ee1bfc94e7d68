//! `ttpes`: sample, train, evaluate, convert and solve from one config file.

mod commands;
mod config;
mod error;
mod threads;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "ttpes", version, about = "Tensor-train potentials: sample, train, eval, convert, solve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` overrides, dotted keys for nested tables.
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Metropolis-Hastings dataset from the configured potential.
    Sample(Common),
    /// Fit a model to the dataset.
    Train(Common),
    /// Predicted-vs-true energies of a checkpoint on the dataset.
    Eval(Common),
    /// Potential, kinetic and Hamiltonian MPOs on an HO-DVR grid.
    Convert(Common),
    /// Vibrational levels of a Hamiltonian MPO.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Full diagonalization instead of DMRG.
        #[arg(long)]
        dense: bool,
        /// Reference levels (CSV) or reference Hamiltonian MPO.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config, &common.overrides)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    threads::thread_count()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, kind) = match &cli.command {
        Command::Sample(c) => (c, "sample"),
        Command::Train(c) => (c, "train"),
        Command::Eval(c) => (c, "eval"),
        Command::Convert(c) => (c, "convert"),
        Command::Solve { common, .. } => (common, "solve"),
    };
    let mut cfg = resolve(common)?;
    if let Command::Solve { dense, reference, .. } = &cli.command {
        cfg.solve.dense |= *dense;
        if reference.is_some() {
            cfg.solve.reference = reference.clone();
        }
    }
    cfg.echo()?;
    match kind {
        "sample" => commands::sample(&cfg),
        "train" => commands::train(&cfg),
        "eval" => commands::eval(&cfg),
        "convert" => commands::convert(&cfg),
        _ => commands::solve(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
