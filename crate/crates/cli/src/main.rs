mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracdiff::{Error, ParameterVector};

/// Forward solves, synthetic data, fits and cost landscapes for
/// `∂_t^β u = -(-Δ)^{α₁/2} u - (-Δ)^{α₂/2} u` on (-1, 1).
#[derive(Debug, Parser)]
#[command(name = "fracdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the centre trajectory u(t, 0; θ), optionally with Gaussian noise.
    Generate(commands::GenerateArgs),
    /// Fit θ to an observed trajectory with projected Levenberg-Marquardt.
    Fit(commands::FitArgs),
    /// Evaluate the cost on a 1-D or 2-D parameter grid.
    Sweep(commands::SweepArgs),
    /// Extract sublevel sets from a 2-D sweep.
    Sublevel(commands::SublevelArgs),
    /// Cost as a function of β for a set of (α₁, α₂) pairs.
    BetaSens(commands::BetaSensArgs),
    /// Compare the spectral solution with a Monte Carlo estimate.
    Validate(commands::ValidateArgs),
    /// Dump the eigenpairs of the discrete operator.
    Eig(commands::EigArgs),
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "fracdiff-out")]
    pub out: PathBuf,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Directory for cached eigendecompositions.
    #[arg(long, env = "FRACDIFF_CACHE")]
    pub cache: Option<PathBuf>,
}

/// Spatial and temporal discretization.
#[derive(Debug, Clone, Copy, Args, serde::Serialize)]
pub struct GridArgs {
    /// Interior grid nodes (odd, so x = 0 is a node); 199 gives h = 0.01.
    #[arg(long, default_value_t = 199)]
    pub nx: usize,
    /// Time intervals on [0, T].
    #[arg(long, default_value_t = 100)]
    pub nt: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
}

pub fn parse_theta(s: &str) -> Result<ParameterVector, String> {
    s.parse::<ParameterVector>().map_err(|e| e.to_string())
}

/// Failure classes mapped onto the process exit status.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    NotConverged,
    BoundaryStall,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(Error::Json(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(Error::Domain(_) | Error::Input(_)) => 2,
            Failure::Core(Error::Numeric(_)) | Failure::NotConverged => 3,
            Failure::BoundaryStall => 4,
            Failure::Core(Error::Io(_) | Error::Json(_) | Error::Parse { .. }) => 5,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let workers = match &cli.command {
        Command::Generate(a) => a.common.workers,
        Command::Fit(a) => a.common.workers,
        Command::Sweep(a) => a.common.workers,
        Command::Sublevel(a) => a.common.workers,
        Command::BetaSens(a) => a.common.workers,
        Command::Validate(a) => a.common.workers,
        Command::Eig(a) => a.common.workers,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Sublevel(a) => commands::sublevel(a),
        Command::BetaSens(a) => commands::beta_sens(a),
        Command::Validate(a) => commands::validate(a),
        Command::Eig(a) => commands::eig(a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("fracdiff: {e}"),
                Failure::NotConverged => eprintln!("fracdiff: fit stopped at the iteration limit"),
                Failure::BoundaryStall => eprintln!("fracdiff: fit stalled on the parameter box"),
            }
            ExitCode::from(f.code())
        }
    }
}
