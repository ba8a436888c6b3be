//! `peace`: compute effects of degree d from model files, data or the built-in examples.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid model or failed
//! validation, 3 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "peace", version, about = "Probabilistic easy variational causal effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effect of one degree for a model file.
    Compute {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        degree: f64,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Effect over a range of degrees, one row per degree.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        /// Inclusive range `start:stop:step`.
        #[arg(long)]
        degrees: String,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Positive and negative parts of the effect of a one-dimensional cause.
    Signed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        degree: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Total variations of a discrete model.
    Tv {
        #[arg(long)]
        model: PathBuf,
        /// Conditioning values, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Effect estimated from samples in a CSV file.
    FromData {
        #[arg(long)]
        data: PathBuf,
        /// Cause columns, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<String>,
        /// Conditioning columns, comma separated.
        #[arg(long, value_delimiter = ',')]
        z: Vec<String>,
        /// Outcome column.
        #[arg(long)]
        y: String,
        #[arg(long, conflicts_with = "degrees")]
        degree: Option<f64>,
        /// Inclusive range `start:stop:step`.
        #[arg(long)]
        degrees: Option<String>,
        /// Rows drawn for the expectation over Z.
        #[arg(long, default_value_t = 64)]
        z_subsample: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Property suite, or numeric checks of a model file with `--model`.
    Validate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a built-in example against its closed form.
    Example {
        /// One of: uniform, newton, joint, linear-product, dis-con.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Cells per axis when a continuous model is discretized.
    #[arg(long, default_value_t = 256)]
    cells: usize,
    #[arg(long = "oracle.knots", default_value_t = 9)]
    oracle_knots: usize,
    #[arg(long = "oracle.sweeps", default_value_t = 100)]
    oracle_sweeps: usize,
    /// Random fields tried by the discrete oracle.
    #[arg(long = "oracle.budget", default_value_t = 1000)]
    oracle_budget: usize,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, env = "PEACE_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long = "quad.points")]
    quad_points: Option<usize>,
    #[arg(long = "quad.panels")]
    quad_panels: Option<usize>,
    #[arg(long = "quad.budget")]
    quad_budget: Option<u64>,
    #[arg(long = "trunc.eps")]
    trunc_eps: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Continuous,
    Discrete,
    Oracle,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FaultArg {
    DifSign,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version go to stdout and succeed; clap's own code 2 would clash with validation failures
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                commands::EXIT_USAGE
            } else {
                commands::EXIT_OK
            });
        }
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
