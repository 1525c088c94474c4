//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid config, 3 numerical
//! diagnostic failure, 4 resource budget exceeded. Failures print one JSON
//! object on stderr.

mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::load_checkpoint;
use commands::CommandError;
pub use config::{LoadedConfig, RunConfig, CONFIG_VERSION, POLICY_NAMES};
pub use output::{Envelope, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "deferral", version, about = "Scheduling of deferrable and nondeferrable demand with local supply")]
pub struct Cli {
    /// Worker threads for solver stages and episodes (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backward induction: value, policy and threshold tables plus diagnostics.
    Solve(RunArgs),
    /// Monte Carlo rollouts of one policy.
    Simulate(RunArgs),
    /// Threshold learning from simulated episodes.
    Learn(RunArgs),
    /// Paired-seed evaluation of several policies.
    Compare(RunArgs),
    /// Supply model estimated from a CSV trace.
    FitDg(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Simulate(_) => "simulate",
            Command::Learn(_) => "learn",
            Command::Compare(_) => "compare",
            Command::FitDg(_) => "fit-dg",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Solve(a) | Command::Simulate(a) | Command::Learn(a) | Command::Compare(a) | Command::FitDg(a) => a,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub command: String,
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Tariff(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::InvalidTrace(_) => 2,
        Error::NonConcave { .. } | Error::Divergence(_) | Error::Bracket { .. } | Error::NonFiniteAction { .. } => 3,
        Error::BudgetExceeded { .. } => 4,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
    }
}

fn report(command: &str, e: &CommandError) -> ErrorReport {
    let command = command.to_string();
    match e {
        CommandError::Core(e) => ErrorReport { command, error: e.kind().into(), message: e.to_string(), exit_code: exit_code(e) },
        CommandError::Diagnostics(d) => ErrorReport { command, error: "diagnostics".into(), message: d.0.clone(), exit_code: 3 },
    }
}

/// Runs one parsed invocation; returns the files written.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>, ErrorReport> {
    let args = command.args();
    let cfg = LoadedConfig::from_file(&args.config).map_err(|e| {
        // An unreadable config file is a config problem too.
        let code = if matches!(e, Error::Io(_)) { 2 } else { exit_code(&e) };
        ErrorReport { command: command.name().into(), error: e.kind().into(), message: format!("{}: {e}", args.config.display()), exit_code: code }
    })?;
    let seed = args.seed.unwrap_or(cfg.config.seed);
    let dir = output::output_dir(cfg.config.output.dir.as_deref(), Path::new("."));
    let run = match command {
        Command::Solve(_) => commands::solve,
        Command::Simulate(_) => commands::simulate,
        Command::Learn(_) => commands::learn,
        Command::Compare(_) => commands::compare_cmd,
        Command::FitDg(_) => commands::fit_dg,
    };
    run(&cfg, seed, &dir).map_err(|e| report(command.name(), &e))
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return 2;
        }
        Err(e) => {
            let _ = e.print();
            return 0;
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("{}", serde_json::json!({"command": cli.command.name(), "error": "invalid_parameter", "message": "workers must be a positive integer", "exit_code": 2}));
            return 2;
        }
    }
    match execute(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(r) => {
            eprintln!("{}", serde_json::to_string(&r).unwrap_or_else(|_| r.message.clone()));
            r.exit_code
        }
    }
}
