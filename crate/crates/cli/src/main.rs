//! `coordmd`: rate-region search, coding simulations and typicality bounds
//! from JSON configs.
//!
//! Exit status: 0 on success, 1 for user errors (bad flags, unreadable or
//! malformed configs, invalid parameters, budget violations), 2 for internal
//! errors (including a replay that does not reproduce its outputs).

mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{execute, resolve};
use crate::manifest::{replay, write_run};

#[derive(Parser, Debug)]
#[command(name = "coordmd", version, about = "Empirical coordination with two descriptions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rate-region frontier search and point checks.
    Region {
        #[command(subcommand)]
        command: RegionCommand,
    },
    /// Monte Carlo runs of the coding scheme.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form typicality bounds.
    Typicality {
        #[command(subcommand)]
        command: TypicalityCommand,
    },
    /// Typical-pair counts over independent codebooks.
    Kstats {
        #[command(flatten)]
        common: Common,
        /// Blocklength (default: first entry of n_values).
        #[arg(long)]
        n: Option<usize>,
        /// Number of codebook draws.
        #[arg(long, default_value_t = 500)]
        draws: usize,
    },
    /// Re-run a previous invocation from its manifest and compare outputs.
    Replay {
        /// Path to a manifest.json written by an earlier run.
        manifest: PathBuf,
        /// Where to write the reproduced outputs (default: <manifest dir>/replay).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum RegionCommand {
    /// Trace the Pareto frontier of achievable (R1, R2).
    Trace {
        #[command(flatten)]
        common: Common,
    },
    /// Search for a witness that (R1, R2) is achievable.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r1: Option<f64>,
        #[arg(long)]
        r2: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum TypicalityCommand {
    /// Print the bound reports for a table, blocklength and slack.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Errors caused by the invocation rather than by the tool.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

/// Errors that indicate a defect or nondeterminism.
#[derive(Debug)]
pub struct InternalError(pub String);

impl std::fmt::Display for InternalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InternalError {}

fn set_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(UserError("--workers must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| InternalError(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, common, extra) = match cli.command {
        Command::Region {
            command: RegionCommand::Trace { common },
        } => ("region-trace", common, commands::Extra::default()),
        Command::Region {
            command: RegionCommand::Check { common, r1, r2 },
        } => (
            "region-check",
            common,
            commands::Extra {
                r1,
                r2,
                ..Default::default()
            },
        ),
        Command::Simulate { common } => ("simulate", common, commands::Extra::default()),
        Command::Typicality {
            command: TypicalityCommand::Bounds { common },
        } => ("typicality-bounds", common, commands::Extra::default()),
        Command::Kstats { common, n, draws } => (
            "kstats",
            common,
            commands::Extra {
                n,
                draws: Some(draws),
                ..Default::default()
            },
        ),
        Command::Replay { manifest, out, workers } => {
            set_workers(workers)?;
            return replay(&manifest, out.as_deref());
        }
    };
    set_workers(common.workers)?;
    let resolved = resolve(name, &common, &extra)?;
    let started = manifest::now_ms();
    let outputs = execute(&resolved, common.format, &common.out)?;
    write_run(&resolved, common.format, &common.out, outputs, started)
}

fn is_user_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UserError>()
            || c.is::<coordmd_core::Error>()
            || c.is::<serde_json::Error>()
            || c.is::<std::io::Error>()
    }) && !e.chain().any(|c| c.is::<InternalError>())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_user_error(&e) { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
