mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rshg", version, about = "Riemannian stochastic hybrid gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured algorithm once per seed.
    Run(Common),
    /// Run the diagnostic suite on the configured problem.
    Verify(Common),
    /// Run the (epochs, seed) grid and fit the rate.
    Sweep(Common),
    /// Estimate problem constants and the fixed-step bounds.
    Estimate(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps (defaults to the number of CPUs).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

/// Why a command failed; each kind maps to one exit status.
#[derive(Debug)]
pub enum Failure {
    /// Schema or validation error in the config or its data (exit 2).
    Config(String),
    /// An optimizer run hit a non-finite value or a degenerate step (exit 3).
    Numerical(String),
    /// A check, a sweep cell or an estimator failed (exit 1).
    Check(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Check(_) | Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical abort: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(common) | Command::Verify(common) | Command::Sweep(common) | Command::Estimate(common)) = &cli.command;

    let level = if common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(k) = common.workers {
        if k == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Run(c) => commands::run(c),
        Command::Verify(c) => commands::verify(c),
        Command::Sweep(c) => commands::sweep(c),
        Command::Estimate(c) => commands::estimate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
