//! `gcld`: runs the toolkit from a TOML config and writes CSV + JSON artifacts.

mod commands;
mod config;
mod verify;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit statuses.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERICAL, message: msg.into() }
    }
}

impl From<gcld::Error> for CliError {
    fn from(e: gcld::Error) -> Self {
        CliError::numerical(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "gcld", version, about = "Gallavotti-Cohen functional of small-noise diffusions")]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `KEY=VALUE` on a dotted config key, e.g. `sde.epsilon=0.5`.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScgfMethod {
    Mc,
    Spectral,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RateMethod {
    Variational,
    Legendre,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every structural check and report pass/fail as JSON.
    Verify,
    /// One Euler-Maruyama trajectory and its functionals.
    Simulate,
    /// Ensemble statistics of W_T: mean, fluctuation ratio, Bernstein tail.
    GcStats,
    /// Scaled cumulant generating function.
    Scgf {
        #[arg(long, value_enum, default_value = "spectral")]
        method: ScgfMethod,
    },
    /// Rate function of the dissipated power.
    Rate {
        #[arg(long, value_enum, default_value = "variational")]
        method: RateMethod,
    },
    /// Legendre transform of an SCGF CSV (`transform.input`).
    Transform,
    /// Deterministic hitting times of the confinement disc.
    Hitting,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides).map_err(CliError::config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    }
    let name = match &cli.command {
        Command::Verify => "verify",
        Command::Simulate => "simulate",
        Command::GcStats => "gc-stats",
        Command::Scgf { .. } => "scgf",
        Command::Rate { .. } => "rate",
        Command::Transform => "transform",
        Command::Hitting => "hitting",
    };
    let ctx = commands::Context::new(cfg, name)?;
    let result = match cli.command {
        Command::Verify => verify::run(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::GcStats => commands::gc_stats(&ctx),
        Command::Scgf { method } => commands::scgf(&ctx, method),
        Command::Rate { method } => commands::rate(&ctx, method),
        Command::Transform => commands::transform(&ctx),
        Command::Hitting => commands::hitting(&ctx),
    };
    result.map_err(|e| CliError { message: format!("{name}: {}", e.message), ..e })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gcld: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
