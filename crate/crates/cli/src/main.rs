//! `dge` — train MADDPG with pluggable discrete gradient estimators, measure
//! estimator statistics against an exact oracle, benchmark relaxation cost,
//! and aggregate runs into a returns report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dge_cli::config::{apply_overrides, parse_ini, resolve};
use dge_cli::{run, CliError, Command};

#[derive(Parser)]
#[command(name = "dge", version, about = "Discrete gradient estimators for multi-agent actor-critic training")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// INI config file with [estimator] [train] [task] [output] sections.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set estimator.kind=GST (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train MADDPG on a task, one run per seed; emits metrics CSVs,
    /// checkpoints, and a merged summary.
    Train(RunArgs),
    /// Estimator statistics against the exact enumeration oracle.
    Estats(RunArgs),
    /// Compute-time microbenchmark across logit dimensionalities.
    Bench(RunArgs),
    /// Train with per-layer gradient-variance logging enabled.
    Gradvar(RunArgs),
    /// Aggregate training metrics into a returns summary with significance
    /// marks.
    Report(RunArgs),
}

fn execute(cmd: Command, args: &RunArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read config '{}': {e}", args.config.display()))
    })?;
    let mut raw = parse_ini(&text).map_err(|e| CliError::Config(e.to_string()))?;
    apply_overrides(&mut raw, &args.set).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = resolve(&raw).map_err(|e| CliError::Config(e.to_string()))?;

    println!("# resolved config");
    for line in &cfg.echo {
        println!("# {line}");
    }
    run(cmd, &cfg, &args.config, &args.set)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Estats(a) => (Command::Estats, a),
        Cmd::Bench(a) => (Command::Bench, a),
        Cmd::Gradvar(a) => (Command::Gradvar, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    match execute(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message=\"{}\"", e.kind(), e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
