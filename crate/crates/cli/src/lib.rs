//! Command-line surface over the `ligbind` library.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error
//! (unreadable, malformed or inconsistent inputs), 3 numerical failure.
//! Diagnostics go to stderr; data outputs go to `--out` files or stdout.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run_command;

/// Failure classes with fixed exit codes.
#[derive(Debug)]
pub enum Fail {
    Config(String),
    Data(String),
    Numerical(String),
}

impl Fail {
    pub fn exit_code(&self) -> i32 {
        match self {
            Fail::Config(_) => 1,
            Fail::Data(_) => 2,
            Fail::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::Config(m) => write!(f, "configuration error: {m}"),
            Fail::Data(m) => write!(f, "data error: {m}"),
            Fail::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for Fail {}

impl From<ligbind::Error> for Fail {
    fn from(e: ligbind::Error) -> Self {
        use ligbind::Error as E;
        match e {
            E::Config(m) => Fail::Config(m),
            e if e.is_numerical() => Fail::Numerical(e.to_string()),
            e => Fail::Data(e.to_string()),
        }
    }
}

/// Exit code for an error chain: the first [`Fail`] or library error found
/// decides, anything else counts as a data error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Fail>() {
            return f.exit_code();
        }
        if let Some(e) = cause.downcast_ref::<ligbind::Error>() {
            return match e {
                ligbind::Error::Config(_) => 1,
                e if e.is_numerical() => 3,
                _ => 2,
            };
        }
    }
    2
}

#[derive(Debug, Parser)]
#[command(name = "ligbind", version, about = "Protein-ligand binding affinity with a distance-only graph transformer and a Lennard-Jones head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset directory and write a checkpoint.
    Train(TrainArgs),
    /// Predict pK for interchange files.
    Predict(PredictArgs),
    /// Ranking power over target clusters.
    Rank(RankArgs),
    /// Scoring metrics on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Residues behind the lowest pair energies of one complex.
    Explain(ExplainArgs),
    /// Write a synthetic oracle-labeled dataset directory.
    Synth(SynthArgs),
    /// Rigid-motion invariance audit of a checkpoint.
    CheckInvariance(CheckInvarianceArgs),
    /// Finite-difference check of every primitive and of the full objective.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with a manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// History CSV path (default: checkpoint path with `.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override any configuration value, e.g. `--set model.hidden_dim=32`.
    #[arg(long = "set", value_name = "KEY=JSON")]
    pub overrides: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Interchange files; none yields a header-only CSV.
    #[arg(long = "in", num_args = 0..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// JSON array of `{target_id, complex_ids}`.
    #[arg(long)]
    pub clusters: PathBuf,
    /// Directory holding the complexes (default: the cluster file's directory).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fraction of in-scope pairs, lowest energy first.
    #[arg(long, default_value_t = 0.10)]
    pub fraction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// How many trailing complexes are tagged `test`.
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long)]
    pub cluster_size: Option<usize>,
    #[arg(long)]
    pub minima_fraction: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckInvarianceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub transforms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = ligbind::training::GRAD_CHECK_SEEDS)]
    pub seeds: u64,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
