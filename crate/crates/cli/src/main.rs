use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dhj_core::runner::{self, Check, Command, Method, Perturbation, RunSpec};
use dhj_core::Error;

/// Solve and verify the discounted Hamilton–Jacobi equation `H(du, q) + αu = 0`
/// on flat tori.
///
/// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
/// 3 verification tolerance exceeded. `DHJ_THREADS` caps the worker count.
#[derive(Debug, Parser)]
#[command(name = "dhj", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Compute the regime constant and the predicted smoothness cap.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve on a uniform grid and write the field with its gradient.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "sl")]
        method: Method,
        /// Nodes per axis.
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run verification checks on a solved field.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        field: PathBuf,
        /// Comma-separated subset of residual,oracle,invariance,bh,continuity.
        #[arg(long, default_value = "residual,oracle,invariance,bh,continuity")]
        checks: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Perturb a solved field, evolve it back and fit the decay rates.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        field: PathBuf,
        /// `const:<amp>` or `sine:<amp>:<mode>`.
        #[arg(long)]
        perturb: Perturbation,
        #[arg(long = "T", default_value_t = 2.0)]
        horizon: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rate: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("DHJ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::config("DHJ_THREADS", format!("expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config("DHJ_THREADS", e.to_string()))
}

fn execute(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    let (config, command, seed) = match cli.command {
        Cmd::Analyze { config, out } => (config, Command::Analyze { out }, None),
        Cmd::Solve {
            config,
            method,
            grid,
            tol,
            out,
            stats,
        } => (
            config,
            Command::Solve {
                method,
                grid,
                tol,
                out,
                stats,
            },
            None,
        ),
        Cmd::Verify {
            config,
            field,
            checks,
            out,
            seed,
        } => (
            config,
            Command::Verify {
                field,
                checks: Check::parse_list(&checks)?,
                out,
            },
            seed,
        ),
        Cmd::Evolve {
            config,
            field,
            perturb,
            horizon,
            out,
            rate,
        } => (
            config,
            Command::Evolve {
                field,
                perturb,
                horizon,
                out,
                rate,
            },
            None,
        ),
    };
    let spec = RunSpec::new(&config, command, seed)?;
    runner::run(&spec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dhj: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
