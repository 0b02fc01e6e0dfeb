//! Command-line front end: config resolution, presets, orchestration, and
//! structured output.
//!
//! Config files are flat `key = value` text with one `[policy]` section per
//! policy; `#` starts a comment. Flags override file values, which override
//! preset values. The fully resolved config is echoed both to
//! `config.resolved` (itself a valid input) and into the summary header.
//!
//! Subcommands: `run`, `detect-eval`, `constants`, `fit`, `trace-validate`.
//! Exit codes: 0 success, 1 validation error, 2 I/O error. The
//! `CDBANDIT_OUT` environment variable sets the default output directory.

mod config;
mod commands;

pub use commands::{cmd_detect_eval, cmd_run, DetectEvalParams};
pub use config::{
    parse_config_text, resolve, ConfigDraft, DetectorDefaults, EnvConfig, ExperimentConfig,
};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "cdbandit",
    version,
    about = "Change-detection bandit simulations over piecewise-stationary environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a regret experiment: each policy against the configured
    /// environment, writing trace and comparison files.
    Run(RunArgs),
    /// Monte-Carlo detector evaluation next to the theoretical bounds.
    DetectEval(DetectEvalArgs),
    /// Evaluate the delay/false-alarm constants and tuned (h, alpha).
    Constants(ConstantsArgs),
    /// Fit a * t^b + c to a column of a trace file.
    Fit(FitArgs),
    /// Validate a trace file and report its structure.
    TraceValidate(TraceValidateArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file (flat key = value with [policy] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset: flipping, switching, or trace.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated policy kinds; replaces the configured list.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Environment kind (flipping, switching, trace) when no preset is used.
    #[arg(long)]
    env: Option<String>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long = "K")]
    num_arms: Option<usize>,
    /// Flipping gap.
    #[arg(long)]
    delta: Option<f64>,
    /// Switching hazard.
    #[arg(long)]
    beta: Option<f64>,
    /// Trace file path (trace environment).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Breakpoint count used to tune baselines (defaults to the realized count).
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "M")]
    m: Option<u32>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    /// Output directory (default: $CDBANDIT_OUT or ./cdbandit-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap; has no effect on outputs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Validate and print the resolved config without running.
    #[arg(long)]
    dry_run: bool,
}

#[derive(clap::Args)]
struct DetectEvalArgs {
    /// cusum or pht.
    #[arg(long, default_value = "cusum")]
    detector: String,
    #[arg(long)]
    eps: f64,
    #[arg(long = "M")]
    m: u32,
    #[arg(long)]
    h: f64,
    /// Pre-change Bernoulli mean.
    #[arg(long, default_value_t = 0.5)]
    pre: f64,
    /// Post-change Bernoulli mean.
    #[arg(long, default_value_t = 0.8)]
    post: f64,
    /// Last slot drawn from the pre-change mean.
    #[arg(long, default_value_t = 0)]
    change_slot: usize,
    #[arg(long = "T", default_value_t = 100_000)]
    horizon: usize,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid gap for the delay/false-alarm bounds; omit if undefined.
    #[arg(long)]
    lambda: Option<f64>,
    /// Breakpoint count for the tuned (h, alpha) row.
    #[arg(long)]
    gamma: Option<usize>,
    /// Number of arms for the tuned alpha.
    #[arg(long = "K", default_value_t = 2)]
    num_arms: usize,
    /// Freeze the CUSUM burn-in estimate (conditional-delay experiment).
    #[arg(long)]
    pin_estimate: Option<f64>,
}

#[derive(clap::Args)]
struct ConstantsArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long = "M")]
    m: u32,
    #[arg(long)]
    lambda: f64,
    /// With --gamma and --K, also print the tuned (h, alpha).
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long = "K")]
    num_arms: Option<usize>,
    /// With --T, also print the delay/false-alarm bounds at this threshold.
    #[arg(long)]
    h: Option<f64>,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Delimiter-separated input with an optional header row.
    #[arg(long)]
    input: PathBuf,
    /// Zero-based column holding the series values.
    #[arg(long, default_value_t = 1)]
    column: usize,
}

#[derive(clap::Args)]
struct TraceValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "T")]
    horizon: usize,
    /// Breakpoints are counted where some arm moves by more than this.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

/// Entry point used by `main`; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point over explicit argv.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => commands::run_command(args),
        Command::DetectEval(args) => commands::detect_eval_command(args),
        Command::Constants(args) => commands::constants_command(args),
        Command::Fit(args) => commands::fit_command(args),
        Command::TraceValidate(args) => commands::trace_validate_command(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
