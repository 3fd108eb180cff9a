mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Discourse-level scene graph toolkit.
#[derive(Debug, Parser, Serialize)]
#[command(name = "sgr", version)]
pub struct Cli {
    /// TOML file whose keys mirror the flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Instances processed concurrently
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Where to write the run metadata (default: <output>.meta.json)
    #[arg(long, global = true)]
    pub meta: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Parse a flattened graph and print it in canonical form
    Parse(ParseArgs),
    /// Merge per-sentence graphs into initial discourse graphs
    Merge(MergeArgs),
    /// Derive delete/insert edits from initial to gold graphs
    DeriveEdits(DeriveArgs),
    /// Build an edit-supervision dataset from corrupted gold graphs
    Corrupt(CorruptArgs),
    /// Iteratively refine initial graphs with a programmer
    Refine(RefineArgs),
    /// Score predicted graphs against gold graphs
    Score(ScoreArgs),
    /// Corpus statistics and lexical diversity of an instance file
    Stats(StatsArgs),
    /// Rank correlation between metric and reference scores
    EvalRank(EvalRankArgs),
    /// Hallucination discrimination accuracy on D-FOIL items
    EvalDfoil(EvalDfoilArgs),
    /// Discourse error rates from annotation files
    EvalErrors(EvalErrorsArgs),
    /// TF-IDF caption retrieval and diverse sampling
    Retrieve(RetrieveArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ParseArgs {
    /// File holding the graph (stdin when absent)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Keep going past malformed units
    #[arg(long)]
    pub lenient: bool,
    /// Apply the default normalization policy
    #[arg(long)]
    pub canonicalize: bool,
    /// Print triples and malformed units as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Instance JSONL file
    #[arg(long)]
    pub input: PathBuf,
    /// JSONL of {"id", "sentence_graphs"} used when an instance has none
    #[arg(long)]
    pub sentence_graphs: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MergeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DeriveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// {"id", "graph"} file of initial graphs (default: merged sentence graphs)
    #[arg(long)]
    pub initial: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Corpus,
    Perturb,
}

#[derive(Debug, Args, Serialize)]
pub struct CorruptArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Corrupted variants per gold graph
    #[arg(long, default_value_t = 15)]
    pub variants: usize,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub delete_fraction: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub insert_fraction: f64,
    #[arg(long, value_enum, default_value_t = Pool::Corpus)]
    pub pool: Pool,
    /// Skip the rows derived from merged sentence graphs
    #[arg(long)]
    pub no_merged: bool,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write a manifest next to the output, naming the dataset
    #[arg(long)]
    pub manifest: Option<String>,
    /// Split label recorded in the manifest
    #[arg(long, default_value = "train")]
    pub split: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgrammerKind {
    Heuristic,
    Remote,
    Replay,
    Oracle,
    Noop,
}

#[derive(Debug, Args, Serialize)]
pub struct RefineArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// {"id", "graph"} file of initial graphs (default: merged sentence graphs)
    #[arg(long)]
    pub initial: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProgrammerKind::Heuristic)]
    pub programmer: ProgrammerKind,
    /// Base URL of the programmer service
    #[arg(long, env = "SGR_PROGRAMMER_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Edit-tuple file replayed by the replay programmer
    #[arg(long)]
    pub edits: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub iterations: usize,
    /// Run every iteration even when a round changes nothing
    #[arg(long)]
    pub no_early_stop: bool,
    /// Attempts per remote request
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    /// Initial retry backoff in milliseconds, doubled per attempt
    #[arg(long, default_value_t = 100)]
    pub backoff_ms: u64,
    /// Directory receiving trace.jsonl
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Spice,
    Bsspice,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashed,
    Remote,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricArgs {
    /// Synonym lexicon: one tab-separated class per line
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EmbedderKind::Hashed)]
    pub embedder: EmbedderKind,
    /// Base URL of the embedding service
    #[arg(long, env = "SGR_EMBEDDER_ENDPOINT")]
    pub embed_endpoint: Option<String>,
    #[arg(long, default_value_t = sgr_core::metrics::DEFAULT_EMBEDDING_DIM)]
    pub embed_dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// {"id", "graph"} predictions (parsed leniently)
    #[arg(long)]
    pub pred: PathBuf,
    /// {"id", "graph"} gold graphs, e.g. an instance file
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricKind::Spice)]
    pub metric: MetricKind,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Machine-readable rows with scores in [0, 1]
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = sgr_core::eval::DEFAULT_MATTR_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = sgr_core::eval::DEFAULT_MTLD_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRankArgs {
    /// JSONL of {"metric", "reference"} scores, or {"preferred", "other"}
    /// with --pairwise
    #[arg(long)]
    pub input: PathBuf,
    /// Agreement with pairwise preferences instead of rank correlation
    #[arg(long)]
    pub pairwise: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalDfoilArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricKind::All)]
    pub metric: MetricKind,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalErrorsArgs {
    /// Annotation files, one per parser
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrieveArgs {
    /// Instance JSONL whose captions form the corpus
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, conflicts_with = "diverse", required_unless_present = "diverse")]
    pub query: Option<String>,
    #[arg(short, long, default_value_t = 5)]
    pub k: usize,
    /// Pick k mutually distant captions instead of answering a query
    #[arg(long)]
    pub diverse: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Failure categories, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Programmer(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Programmer(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Programmer(m) => write!(f, "programmer error: {m}"),
        }
    }
}

impl From<sgr_core::dataset::DatasetError> for CliError {
    fn from(e: sgr_core::dataset::DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl Cli {
    fn output(&self) -> Option<&Path> {
        match &self.command {
            Command::Parse(_) => None,
            Command::Merge(a) => a.output.as_deref(),
            Command::DeriveEdits(a) => a.output.as_deref(),
            Command::Corrupt(a) => Some(&a.output),
            Command::Refine(a) => a.output.as_deref(),
            Command::Score(a) => a.output.as_deref(),
            Command::Stats(a) => a.output.as_deref(),
            Command::EvalRank(a) => a.output.as_deref(),
            Command::EvalDfoil(a) => a.output.as_deref(),
            Command::EvalErrors(a) => a.output.as_deref(),
            Command::Retrieve(a) => a.output.as_deref(),
        }
    }

    fn meta_path(&self) -> Option<PathBuf> {
        self.meta.clone().or_else(|| {
            self.output().map(|o| {
                let mut s = o.as_os_str().to_owned();
                s.push(".meta.json");
                PathBuf::from(s)
            })
        })
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    seed: u64,
    jobs: usize,
    config: &'a Cli,
    started_unix_ms: u128,
    elapsed_ms: f64,
    exit_code: u8,
    error: Option<String>,
}

fn write_meta(cli: &Cli, started: SystemTime, elapsed_ms: f64, result: &Result<(), CliError>) {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        core_version: sgr_core::VERSION,
        seed: cli.seed,
        jobs: cli.jobs,
        config: cli,
        started_unix_ms: started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
        elapsed_ms,
        exit_code: result.as_ref().err().map_or(0, CliError::code),
        error: result.as_ref().err().map(ToString::to_string),
    };
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    match cli.meta_path() {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, text + "\n") {
                log::warn!("could not write run metadata to {}: {e}", path.display());
            }
        }
        None => log::info!("run metadata: {text}"),
    }
}

fn parse_args() -> Result<Cli, clap::Error> {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    if let Some(path) = config::config_path(&args) {
        let table = config::load(Path::new(&path))
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("config: {e}\n")))?;
        args = config::merge(args, &table)
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("config: {e}\n")))?;
    }
    Cli::try_parse_from(args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse_args() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let started = SystemTime::now();
    let clock = Instant::now();
    let result = if cli.jobs == 0 {
        Err(CliError::Usage("--jobs must be at least 1".into()))
    } else {
        commands::run(&cli)
    };
    write_meta(&cli, started, clock.elapsed().as_secs_f64() * 1e3, &result);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgr: {e}");
            ExitCode::from(e.code())
        }
    }
}
