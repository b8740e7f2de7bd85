//! `breakout`: ingest mention records, generate synthetic scenarios, train
//! forecasting models, evaluate them and rank likely breakouts.
//!
//! Exit codes: 0 on success, 1 on internal failure, 2 on usage or input
//! validation errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use breakout_core::eval::RecallMode;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "breakout", version, about = "Breakout forecasting from weekly social and broadcast mention counts")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed for the scenario generator and every pooled model.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate daily mention records into weekly panels and drop outliers.
    Ingest(IngestArgs),
    /// Generate a synthetic scenario with injected breakouts.
    Synth(SynthArgs),
    /// Train the selected models and write one model file per model.
    Train(TrainArgs),
    /// Score trained models on each entity's final month.
    Evaluate(EvaluateArgs),
    /// List the entities with the highest predicted breakout ratio.
    Rank(RankArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Daily records: `entity_id,date,channel,count` as CSV or JSONL.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Record format (default: from the file extension).
    #[arg(long, value_parser = ["csv", "jsonl"])]
    pub format: Option<String>,
    /// Directory for `panels.csv` and `ingest_summary.txt`.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// First day of week 1 (YYYY-MM-DD).
    #[arg(long)]
    pub origin: Option<NaiveDate>,
    #[arg(long)]
    pub span_weeks: Option<usize>,
    /// Drop entities with at most this many social mentions in total.
    #[arg(long)]
    pub outlier_low: Option<u64>,
    /// Drop entities with at least this many social mentions in total.
    #[arg(long)]
    pub outlier_high: Option<u64>,
    /// Drop entities without any broadcast mentions.
    #[arg(long)]
    pub require_broadcast: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Short breakout ramps in the final month.
    Default,
    /// Ramps of 28 to 34 weeks with a six-week broadcast lead.
    Gradual,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for `records.csv` and `ground_truth.csv`.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Starting scenario; `[scenario]` config values and flags apply on top.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n_entities: Option<usize>,
    #[arg(long)]
    pub span_weeks: Option<usize>,
    #[arg(long)]
    pub breakout_fraction: Option<f64>,
    #[arg(long)]
    pub breakout_lift: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Weekly panel file written by `ingest`.
    #[arg(long, value_name = "FILE")]
    pub panels: Option<PathBuf>,
    /// Directory for model files and the training summary.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated model keys: var, varma, rf, gbt, mlnn, lstm, and the
    /// social-only variants rf-tw, gbt-tw, mlnn-tw, lstm-tw.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Classical order grid, e.g. `p=1..2,q=0..1`.
    #[arg(long, value_name = "SPEC")]
    pub grid: Option<String>,
    /// Weeks per month; windows span three months.
    #[arg(long)]
    pub month_weeks: Option<usize>,
    /// Tune pooled models over the configured candidates.
    #[arg(long)]
    pub tune: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub panels: Option<PathBuf>,
    /// Directory holding the model files written by `train`.
    #[arg(long, value_name = "DIR")]
    pub models_dir: Option<PathBuf>,
    /// Models to score (default: every model file found).
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Breakout ratio threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = parse_recall_mode)]
    pub recall_mode: Option<RecallMode>,
    #[arg(long)]
    pub month_weeks: Option<usize>,
    /// Report CSV; the resolved configuration is written beside it.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-entity predictions CSV.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, value_name = "FILE")]
    pub panels: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub models_dir: Option<PathBuf>,
    /// Model key to rank with, e.g. `gbt`.
    #[arg(long)]
    pub model: String,
    /// Number of entities to list.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub month_weeks: Option<usize>,
    /// Ranking CSV (default: standard output).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_recall_mode(s: &str) -> Result<RecallMode, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
