//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check or bound failed, 2 usage, parse, I/O or
//! file-format error, 3 a NaN or infinity during computation.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hypernet",
    version,
    about = "Hypercomplex layers over algebras given by structure tensors"
)]
pub struct Cli {
    /// Print a machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check unit, commutativity, associativity and non-degeneracy of an algebra.
    AlgebraCheck(AlgebraCheckArgs),
    /// Compare the layer algorithms against the naive oracle and finite differences.
    Verify(VerifyArgs),
    /// Train a model and write a checkpoint and per-epoch metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint's loss on a dataset.
    Eval(EvalArgs),
    /// Fit a sampled target with one hidden hypercomplex layer at several widths.
    UatDemo(UatArgs),
}

#[derive(Debug, Args)]
pub struct AlgebraCheckArgs {
    /// Algebra JSON file, or `builtin:<name>`.
    pub algebra: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub algebra: String,
    /// dense, conv1d, conv2d or conv3d.
    #[arg(long)]
    pub layer: String,
    /// Randomized forward trials against the oracle.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Randomized finite-difference gradient checks.
    #[arg(long, default_value_t = 5)]
    pub gradient_checks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error of the forward pass.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Largest accepted relative error of a gradient entry.
    #[arg(long, default_value_t = 1e-4)]
    pub grad_tol: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model spec JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Training spec JSON.
    #[arg(long)]
    pub train: PathBuf,
    /// Training CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSONL to write, one line per epoch.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Held-out CSV evaluated after every epoch.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Overrides the training spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record elapsed time in the metrics (makes them non-reproducible).
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct UatArgs {
    #[arg(long, default_value = "builtin:complex")]
    pub algebra: String,
    /// complex-square, quaternion-rotation or constant.
    #[arg(long, default_value = "complex-square")]
    pub target: String,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub hidden: Vec<usize>,
    /// Training spec JSON; the built-in schedule when absent.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Sup-norm error the last width must stay under.
    #[arg(long, default_value_t = crate::train::UAT_REGRESSION_BOUND)]
    pub bound: f64,
    /// Seeds tried per width; the best fit counts.
    #[arg(long, default_value_t = crate::train::UAT_SEEDS)]
    pub seeds: u64,
    /// First seed; overrides the training spec's.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AlgebraCheck(_) => "algebra-check",
            Command::Verify(_) => "verify",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::UatDemo(_) => "uat-demo",
        }
    }
}

/// What a command produced: its exit code, a text report and the same
/// report as JSON.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub text: String,
    pub json: serde_json::Value,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite(_) => EXIT_NON_FINITE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the command, prints
/// its report and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let name = cli.command.name();
    match commands::dispatch(&cli.command) {
        Ok(outcome) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&outcome.json).expect("report serializes")
                );
            } else {
                print!("{}", outcome.text);
            }
            outcome.code
        }
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("hypernet {name}: {err}");
            if cli.json {
                let report =
                    json!({ "command": name, "exit_code": code, "error": err.to_string() });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            }
            code
        }
    }
}
