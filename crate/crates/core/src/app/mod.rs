//! The `triage` command line tool.
//!
//! Exit codes: 0 success, 64 usage, 2 I/O, 3 data or validation.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Data(String),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => EXIT_USAGE,
            AppError::Io { .. } => EXIT_IO,
            AppError::Data(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "ED triage acuity pipeline: synthetic data, term extraction, GBDT training, evaluation"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Outputs do not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus labeled by the rule oracle.
    Generate(GenerateArgs),
    /// Extract clinical terms from every free-text field.
    Extract(ExtractArgs),
    /// Featurize a corpus and train the ESI classifier.
    Train(TrainArgs),
    /// Score raters against reference labels.
    Evaluate(EvaluateArgs),
    /// Queue records whose out-of-fold prediction disagrees with the nurse ESI.
    KfoldReview(KfoldArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseModel {
    /// Nurse-given-verified rates from the reviewed records.
    Default,
    /// Nurse ESI equals the true ESI.
    None,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of records.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output JSON Lines file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub site: Option<String>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseModel>,
    /// Fraction of records made unusable on purpose.
    #[arg(long)]
    pub violation_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output tags JSON Lines file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Dictionary TSV replacing the bundled one.
    #[arg(long, value_name = "FILE")]
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Verified ESI where present, nurse ESI otherwise.
    Training,
    Nurse,
    Verified,
    Gold,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_frequency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output model JSON file.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "training")]
    pub label: LabelSource,
    /// Review file (JSON Lines of id and verified_esi) applied before training.
    #[arg(long, value_name = "FILE")]
    pub use_verified_labels: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    /// The published nurse-by-verified matrix of 19,652 reviewed records.
    #[value(name = "supp-table-2")]
    SuppTable2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    Gold,
    Verified,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Model rater, as NAME=FILE or FILE (named by file stem). Repeatable.
    #[arg(long = "model", value_name = "[NAME=]FILE")]
    pub models: Vec<String>,
    /// External label rater, NAME=FILE of JSON Lines {"id", "esi"}. Repeatable.
    #[arg(long = "rater", value_name = "NAME=FILE")]
    pub raters: Vec<String>,
    /// Leave the nurse ESI column out of the comparison.
    #[arg(long)]
    pub no_nurse: bool,
    #[arg(long, value_enum, default_value = "gold")]
    pub truth: TruthSource,
    /// Subgroup split: site, age, high_risk or disposition. Repeatable.
    #[arg(long = "subgroup")]
    pub subgroups: Vec<String>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Directory for report.json and report.txt.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Evaluate a bundled confusion matrix instead of a corpus.
    #[arg(long, value_enum)]
    pub fixture: Option<Fixture>,
}

#[derive(Debug, Args)]
pub struct KfoldArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output queue JSON Lines file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Assign folds without stratifying by nurse ESI.
    #[arg(long)]
    pub no_stratify: bool,
    #[command(flatten)]
    pub train: TrainOverrides,
}

fn init_logging(level: &str) -> Result<(), AppError> {
    let filter: log::LevelFilter = level.parse().map_err(|_| AppError::Usage(format!("unknown log level {level:?}")))?;
    let _ = env_logger::Builder::new().filter_level(filter).target(env_logger::Target::Stderr).try_init();
    Ok(())
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), AppError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    init_logging(cli.log_level.as_deref().or(config.log_level.as_deref()).unwrap_or("warn"))?;
    let threads = cli.threads.or(config.threads);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(AppError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| AppError::Usage(e.to_string()))?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    pool.install(|| commands::dispatch(&cli.command, &config, seed))
}
