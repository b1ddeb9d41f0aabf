//! `qpake`: run experiments, evaluate bounds, search OT-cores and run the
//! acceptance suite.
//!
//! Exit codes: 0 success, 1 runtime or config error, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "qpake", version, about = "Password-authenticated key exchange over a simulated BB84 channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment; statistics go to stdout as JSON.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.trials`.
        #[arg(long)]
        trials: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Directory for config.toml, stats.json, summary.txt, trials.jsonl
        /// and transcripts; overrides `run.out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the security bounds for one parameter point.
    Bounds {
        #[arg(long, required_unless_present = "target")]
        n: Option<f64>,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 16.0)]
        lambda: f64,
        /// Smoothing parameter.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Failure probability of the password code, for eps_cor.
        #[arg(long, default_value_t = 0.0)]
        code_failure: f64,
        /// Instead of a report, find the smallest n meeting this eps_sec.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = 16)]
        dictionary: usize,
        #[arg(long)]
        json: bool,
    },
    /// List the OT-cores of a two-party function.
    #[command(group(ArgGroup::new("function").required(true).args(["table", "equality"])))]
    Otcore {
        /// Function table: a line `|A| |B|`, then |A| rows of |B| cells `a,b` (or `v` for a common output).
        table: Option<PathBuf>,
        /// Use EQUALITY over an alphabet of this size.
        #[arg(long)]
        equality: Option<usize>,
        /// One JSON object per core.
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite; exits 0 iff every check passes.
    Selftest {
        /// Run only these checks (`AC03`, `3` or a check name).
        #[arg(long)]
        only: Vec<String>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, seed, trials, jobs, out } => {
            commands::run(commands::RunArgs { config, seed, trials, jobs, out })?;
        }
        Command::Bounds { n, tau, lambda, eps, beta, gamma, code_failure, target, dictionary, json } => {
            commands::bounds(commands::BoundsArgs { n, tau, lambda, eps, beta, gamma, code_failure, target, dictionary, json })?;
        }
        Command::Otcore { table, equality, json } => commands::otcore(table.as_deref(), equality, json)?,
        Command::Selftest { only, jobs } => return commands::selftest(&only, jobs),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // usage errors exit 2, --help and --version exit 0
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
