//! `knockoff`: construct knockoffs, run selection on data files, run Monte
//! Carlo experiments, and verify the implementation against its oracles.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 numerical
//! failure, 3 verification failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "knockoff", version, about = "Knockoff filter with directional FDR control")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for trial parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build equicorrelated knockoffs for a design CSV.
    Construct {
        /// Headerless numeric CSV, one observation per row.
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the configured methods to a design and response on disk.
    Run(RunArgs),
    /// Monte Carlo experiment over synthetic data.
    Simulate(SimulateArgs),
    /// Run the oracle battery; exits 3 if any check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the target level of every method.
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: RunArgs,
    /// Overrides the number of trials per setting.
    #[arg(long)]
    trials: Option<usize>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<knockoff::Error> for Failure {
    fn from(e: knockoff::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Construct { design, seed, out } => commands::construct(&design, seed, &out),
        Command::Run(a) => commands::run(&config::Overrides::new(&a.config, a.seed, a.q, None), &a.out),
        Command::Simulate(a) => {
            let c = a.common;
            commands::simulate(&config::Overrides::new(&c.config, c.seed, c.q, a.trials), &c.out)
        }
        Command::Verify { seed } => commands::verify(seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.threads {
        Some(0) => Err(Failure::Config("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Failure::Config(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
