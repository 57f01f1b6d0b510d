#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Path-following solver for the Fu-Yau Hessian equation (α < 0) on flat
/// complex tori.
#[derive(Debug, Parser)]
#[command(name = "fuyau", version)]
struct Cli {
    /// Log progress to stderr (repeat for Newton traces).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March t from 0 to 1 and write report.json, diagnostics.csv and u_final.fyf.
    Solve(SolveArgs),
    /// Run the self-check suites and write verify.json.
    Verify(VerifyArgs),
    /// Build the forcing that makes a given u* an exact solution at t = 1.
    Manufacture(ManufactureArgs),
    /// Solve the same data for several values of M0.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Named preset: trivial or fy-example.
    #[arg(long, conflicts_with = "problem")]
    pub preset: Option<String>,
    /// JSON problem file.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Complex dimension (presets only).
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points per real axis (presets only).
    #[arg(long = "grid-N")]
    pub grid_n: Option<usize>,
    /// Normalization ∫e^u = M0.
    #[arg(long = "M0")]
    pub m0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Seed for random preset data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Residual tolerance at every accepted t.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dt0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt_max: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "fuyau-out")]
    pub out: PathBuf,
    /// Continue from the checkpoint in <out>/checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Reference solution dump; the report then includes |u - u_ref|.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run a single suite: symfunc, fields, model, linearized, identity, continuation.
    #[arg(long)]
    pub only: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per sampled check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value = "fuyau-out")]
    pub out: PathBuf,
    /// Inject a sign fault into the wedge kernel; the suites must then fail.
    #[arg(long)]
    pub mutate: bool,
}

#[derive(Debug, Args)]
pub struct ManufactureArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// u* - log M0 as a JSON mode list or an absolute u* as a .fyf dump
    /// (default 0.05 sin x1 cos x3).
    #[arg(long)]
    pub ustar: Option<PathBuf>,
    #[arg(long, default_value = "fuyau-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated values of M0 (at least two).
    #[arg(long = "M0-list", value_delimiter = ',', required = true)]
    pub m0_list: Vec<f64>,
    #[arg(long, default_value = "fuyau-out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = commands::configure_threads().and_then(|()| match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Manufacture(a) => commands::manufacture(&a),
        Command::Sweep(a) => commands::sweep(&a),
    });
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
