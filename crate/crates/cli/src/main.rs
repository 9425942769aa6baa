//! `gsc`: carpet validation, level graphs, p-harmonic solves, rho/beta
//! estimation, functional evaluation and verification bundles.
//!
//! Exit codes: 0 success, 1 validation/configuration/usage error,
//! 2 solver non-convergence, 3 budget exceeded, 4 verification suite
//! completed but failed its stability checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsc_core::Error;

use config::{LevelRange, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "gsc", version, about = "Generalized Sierpinski carpet p-energy toolkit")]
struct Cli {
    /// Carpet spec JSON: {"D":2,"a":3,"S":[[0,0],...]}.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, default_value_t = gsc_core::functionals::MCQuadrature::default().seed)]
    seed: u64,
    /// Record wall-clock times (artifacts are then no longer reproducible byte for byte).
    #[arg(long, global = true)]
    timing: bool,
    /// Re-run the configuration embedded in a JSON artifact.
    #[arg(long, conflicts_with = "spec")]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Check the four carpet conditions.
    Validate,
    /// Build G_n and export its edge list.
    Graph {
        #[arg(long)]
        n: u32,
    },
    /// Face-to-face p-capacity solve on G_n.
    Solve {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        grad_tol: Option<f64>,
    },
    /// Capacity ratios, rho_p and beta_p over consecutive levels.
    Rho {
        #[arg(long)]
        p: f64,
        /// Consecutive levels as `lo:hi`.
        #[arg(long, default_value = "3:5")]
        levels: LevelRange,
    },
    /// Pair functionals of one test function over a level range.
    Functional {
        #[arg(long)]
        p: f64,
        /// `harmonic:M`, `coord:K`, `const:C` or `step`.
        #[arg(long)]
        function: String,
        #[arg(long, default_value = "2:3")]
        n: LevelRange,
        /// Walk exponent; estimated from capacities over `--rho-levels` when absent.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value = "3:5")]
        rho_levels: LevelRange,
        #[arg(long, default_value_t = 1 << 18)]
        samples: u64,
        /// Ball constant c; defaults to 2 sqrt(D) + 1/8.
        #[arg(long)]
        c: Option<f64>,
        /// Also estimate the Korevaar-Schoen energy at r = c a^{-n}.
        #[arg(long)]
        ks: bool,
    },
    /// Run the inequality suite and write a report bundle.
    Verify {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value = "2:5")]
        n: LevelRange,
        #[arg(long, default_value = "3:7")]
        member_levels: LevelRange,
        #[arg(long, default_value = "3:5")]
        rho_levels: LevelRange,
        #[arg(long, default_value_t = 1 << 20)]
        samples: u64,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 0.10)]
        stability_threshold: f64,
    },
}

/// Maps library errors to the documented exit codes.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } => 2,
        Error::Budget { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let config = match (&cli.replay, cli.command) {
        (Some(path), None) => RunConfig::from_artifact(path)?,
        (Some(_), Some(_)) => return Err(Error::Config("--replay takes no subcommand".into())),
        (None, None) => return Err(Error::Config("missing subcommand (see --help)".into())),
        (None, Some(command)) => {
            let path = cli.spec.ok_or_else(|| Error::Config("--spec is required".into()))?;
            RunConfig::new(path, cli.seed, cli.threads, cli.timing, command)?
        }
    };
    if config.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cli.out)?;
    pool.install(|| commands::dispatch(&config, &cli.out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
