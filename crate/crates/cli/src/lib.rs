//! `triage` command line. Each subcommand loads its inputs, calls one
//! pipeline operation and prints that operation's own rendering, so the
//! output is byte-for-byte what the library produces.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 infeasible floor, flagged
//! discrepancy or drift alert, 3 internal failure.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Result of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    /// Machine-readable report written by the command, if any.
    pub report: Option<PathBuf>,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { code: EXIT_OK, stdout, ..Default::default() }
    }

    fn flagged(stdout: String, stderr: String) -> Self {
        Outcome { code: EXIT_FLAGGED, stdout, stderr, report: None }
    }

    fn with_report(mut self, path: Option<PathBuf>) -> Self {
        self.report = path;
        self
    }
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Internal(String),
}

impl CliError {
    fn invalid(message: impl std::fmt::Display) -> Self {
        CliError::Invalid(message.to_string())
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        CliError::Internal(message.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Multilingual news triage: ingest, train, calibrate, evaluate, monitor")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay fixture feeds or upload manual records into a store.
    Ingest(IngestArgs),
    /// Train a linear scorer on reviewed articles.
    Train(TrainArgs),
    /// Pick a threshold from a labeled staging sample.
    Calibrate(CalibrateArgs),
    /// Run baseline and candidate pipelines over the same week of traffic.
    Shadow(ShadowArgs),
    /// Stage comparison or category F1 discrepancy report.
    Report(ReportArgs),
    /// Monthly precision, drift alerts and a retraining recommendation.
    Monitor(MonitorArgs),
    /// Reviewed articles the model scores high on a category they lack.
    Audit(AuditArgs),
    /// Run the review service.
    Serve(ServeArgs),
    /// Write the synthetic fixture corpus.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Replay fixture (JSONL); the file stem is the source id.
    #[arg(long)]
    pub replay: Vec<PathBuf>,
    /// JSONL of expert-uploaded records.
    #[arg(long)]
    pub manual: Option<PathBuf>,
    /// Records per replay fetch.
    #[arg(long, default_value_t = 100)]
    pub rate: usize,
    #[arg(long, default_value_t = 100_000)]
    pub max_ticks: usize,
    /// Score new articles with the store's production artifact.
    #[arg(long)]
    pub score: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Store (or fixture directory) holding articles and decisions.
    #[arg(long)]
    pub data: PathBuf,
    /// Write the artifact bytes here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Publish the artifact into this store.
    #[arg(long)]
    pub publish: Option<PathBuf>,
    #[arg(long, default_value = "staging")]
    pub stage: String,
    #[arg(long, default_value_t = triage_core::classifier::DEFAULT_HASH_BITS)]
    pub hash_bits: u32,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Category left unannotated in the training data (repeatable).
    #[arg(long)]
    pub mask: Vec<String>,
    /// Machine-readable training summary.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Staging records (JSONL).
    #[arg(long)]
    pub sample: PathBuf,
    /// Required for relevance calibration.
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long, default_value = "relevance")]
    pub scope: String,
    #[arg(long, default_value = "min-precision")]
    pub mode: String,
    #[arg(long)]
    pub floor: f64,
    #[arg(long, default_value_t = 14)]
    pub window_days: u32,
    #[arg(long, default_value = "raw")]
    pub estimator: String,
    /// Thresholds to tabulate before the selection.
    #[arg(long, value_delimiter = ',')]
    pub options: Vec<f64>,
    /// Current weekly review volume, for multipliers in the table.
    #[arg(long)]
    pub baseline_weekly: Option<u64>,
    /// Threshold policy file to update.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Write the selected thresholds into --policy.
    #[arg(long, requires = "policy")]
    pub apply: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ShadowArgs {
    /// Week directory: articles, both prediction sets, decisions, both policies.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "newsapi,osac")]
    pub baseline_sources: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "newsapi,osac,gdelt")]
    pub candidate_sources: Vec<String>,
    #[arg(long, default_value_t = 7.0)]
    pub period_days: f64,
    /// Directory for baseline.json and deployment.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, requires = "deployment", conflicts_with_all = ["offline", "live"])]
    pub baseline: Option<PathBuf>,
    #[arg(long, requires = "baseline")]
    pub deployment: Option<PathBuf>,
    #[arg(long, requires = "live")]
    pub offline: Option<PathBuf>,
    #[arg(long, requires = "offline")]
    pub live: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub max_gap: f64,
    /// Flag live F1 above offline as well as below.
    #[arg(long)]
    pub two_sided: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Defaults to the store's production artifact.
    #[arg(long)]
    pub artifact: Option<String>,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 2)]
    pub min_history: usize,
    #[arg(long, default_value_t = 10)]
    pub min_support: u64,
    /// Count labels decided after this instant (RFC 3339) as fresh.
    /// Defaults to the artifact's creation time.
    #[arg(long)]
    pub fresh_since: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub min_fresh: usize,
    #[arg(long)]
    pub metrics_csv: Option<PathBuf>,
    #[arg(long)]
    pub series_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub artifact: Option<String>,
    #[arg(long)]
    pub category: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long, default_value = "fixtures")]
    pub out: PathBuf,
}

/// Parse `argv` (program name first) and run the command.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code: EXIT_INVALID, stderr: text, ..Default::default() }
            } else {
                Outcome::ok(text)
            };
        }
    };
    execute(cli)
}

pub fn execute(cli: Cli) -> Outcome {
    let seed = cli.seed;
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a, seed),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Shadow(a) => commands::shadow(a),
        Command::Report(a) => commands::report(a),
        Command::Monitor(a) => commands::monitor(a),
        Command::Audit(a) => commands::audit(a),
        Command::Serve(a) => commands::serve(a),
        Command::Fixtures(a) => commands::fixtures(a, seed),
    };
    match result {
        Ok(outcome) => outcome,
        Err(CliError::Invalid(m)) => Outcome { code: EXIT_INVALID, stderr: format!("error: {m}\n"), ..Default::default() },
        Err(CliError::Internal(m)) => Outcome { code: EXIT_INTERNAL, stderr: format!("internal error: {m}\n"), ..Default::default() },
    }
}
