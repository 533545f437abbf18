//! Argument parsing and dispatch for the `rewritekit` binary.
//!
//! [`run`] parses an argument list, executes one subcommand and returns the
//! process exit code: 0 on success, 1 on data errors, 2 on usage errors.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rewritekit::corpusio::{read_all, CorpusError};
use rewritekit::metrics::SariMode;
use rewritekit::nli::{NliClient, RemoteConfig};
use rewritekit::stats::ReportFormat;
use serde::de::DeserializeOwned;

mod commands;
mod evaluate;

pub use evaluate::{evaluate_record, summarize, RecordMetrics};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rewritekit",
    about = "Text-rewriting data and evaluation toolkit",
    disable_version_flag = true
)]
pub struct Cli {
    /// Print toolkit and config-schema versions.
    #[arg(long, short = 'V')]
    pub version: bool,
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Treat any malformed input line as fatal.
    #[arg(long, global = true)]
    pub strict: bool,
    /// NLI service base URL (falls back to $NLI_ENDPOINT).
    #[arg(long, global = true, conflicts_with = "nli_stub")]
    pub nli_endpoint: Option<String>,
    /// JSONL file caching remote NLI scores.
    #[arg(long, global = true, conflicts_with = "nli_stub")]
    pub nli_cache: Option<PathBuf>,
    /// Use the offline lexical-overlap scorer.
    #[arg(long, global = true)]
    pub nli_stub: bool,
    /// Scorer identity for cache keys when the service does not report one.
    #[arg(long, global = true, conflicts_with = "nli_stub")]
    pub nli_scorer_id: Option<String>,
    /// More log output (repeatable).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Markdown,
    Tsv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Markdown => ReportFormat::Markdown,
            Format::Tsv => ReportFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SariModeArg {
    Canonical,
    AllF1,
}

impl From<SariModeArg> for SariMode {
    fn from(m: SariModeArg) -> Self {
        match m {
            SariModeArg::Canonical => SariMode::Canonical,
            SariModeArg::AllF1 => SariMode::AllF1,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against sources and gold targets.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Aggregate report; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-record metrics as JSONL.
        #[arg(long)]
        per_record: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "canonical")]
        sari_mode: SariModeArg,
        /// Only source-relative metrics; targets are ignored.
        #[arg(long)]
        no_reference: bool,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Apply the quality function to every candidate.
    Score {
        /// Candidate sets, or records whose target is scored.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Keyword-list directory overriding the shipped lists.
        #[arg(long)]
        keywords: Option<PathBuf>,
    },
    /// Repair or drop records with unsupported target sentences.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Build comparison pairs from candidate sets and their verdicts.
    Pairs {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Every good candidate against every bad one.
        #[arg(long)]
        all_pairs: bool,
    },
    /// Fit the linear reward model on comparison pairs.
    RewardTrain {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        /// Random initial weights from this seed instead of zeros.
        #[arg(long)]
        seed: Option<u64>,
        /// Print an analytic-versus-numeric gradient comparison at the
        /// trained weights.
        #[arg(long)]
        check_gradient: bool,
    },
    /// Mine revision records from a MediaWiki history export.
    ExtractWiki {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        keywords: Option<PathBuf>,
        /// Records whose edit summary reads as a detailed instruction.
        #[arg(long)]
        instructions_out: Option<PathBuf>,
        /// Extraction counts as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render chain-of-thought instruction prompts for a text corpus.
    SynthPrompt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        shots: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query an LLM for instructions and rewrites.
    SynthGenerate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "LLM_ENDPOINT")]
        llm_endpoint: String,
        #[arg(long)]
        out: PathBuf,
        /// Skipped prompts with reasons.
        #[arg(long)]
        skipped: Option<PathBuf>,
        #[arg(long, default_value_t = rewritekit::synthgen::DEFAULT_CONCURRENCY)]
        concurrency: usize,
        #[arg(long, default_value_t = 512)]
        max_tokens: u32,
        #[arg(long, default_value_t = 0.5)]
        temperature: f64,
        #[arg(long, default_value_t = 40)]
        top_k: u32,
    },
    /// Corpus statistics table.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inter-rater agreement and Likert means.
    Kappa {
        #[arg(long)]
        ratings: PathBuf,
        /// A dimension name, or `all`.
        #[arg(long, default_value = "all")]
        dimension: String,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn version_string() -> String {
    format!(
        "rewritekit {} (config schema {})",
        env!("CARGO_PKG_VERSION"),
        rewritekit::CONFIG_SCHEMA_VERSION
    )
}

/// Parses `argv` (program name first) and runs the selected subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.global.verbose);
    if cli.version {
        println!("{}", version_string());
        return EXIT_OK;
    }
    let Some(command) = cli.command else {
        eprintln!("usage error: no subcommand given; see --help");
        return EXIT_USAGE;
    };
    match execute(&cli.global, command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Data(_) => EXIT_DATA,
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Runs `command` on a pool of `global.jobs` workers.
pub fn execute(global: &Global, command: Command) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if global.jobs > 0 {
        builder = builder.num_threads(global.jobs);
    }
    let pool = builder.build().map_err(|e| usage(format!("--jobs: {e}")))?;
    pool.install(|| commands::dispatch(global, command))
}

pub(crate) fn require_file(flag: &str, path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{flag} {}: no such file", path.display())))
    }
}

pub(crate) fn require_dir(flag: &str, path: &Path) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "{flag} {}: no such directory",
            path.display()
        )))
    }
}

/// Reads a whole JSONL file, logging skipped lines unless `strict`.
pub(crate) fn load<T: DeserializeOwned>(path: &Path, strict: bool) -> CliResult<Vec<T>> {
    let outcome = read_all(path, strict)
        .map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))?;
    for e in &outcome.errors {
        if let CorpusError::Malformed { line, message } = e {
            log::warn!("{}:{line}: skipped: {message}", path.display());
        }
    }
    Ok(outcome.records)
}

/// The NLI client the flags select, or `None` when none is configured.
pub(crate) fn nli_client(global: &Global) -> CliResult<Option<NliClient>> {
    if global.nli_stub {
        return Ok(Some(NliClient::stub()));
    }
    let endpoint = global
        .nli_endpoint
        .clone()
        .or_else(|| std::env::var("NLI_ENDPOINT").ok().filter(|s| !s.is_empty()));
    let Some(endpoint) = endpoint else {
        if global.nli_cache.is_some() || global.nli_scorer_id.is_some() {
            return Err(usage(
                "--nli-cache and --nli-scorer-id need an NLI endpoint",
            ));
        }
        return Ok(None);
    };
    let mut client = NliClient::remote(RemoteConfig::new(endpoint));
    if let Some(id) = &global.nli_scorer_id {
        client = client.with_scorer_id(id.clone());
    }
    if let Some(path) = &global.nli_cache {
        client = client.with_cache_file(path)?;
    }
    Ok(Some(client))
}

pub(crate) fn require_nli(global: &Global) -> CliResult<NliClient> {
    nli_client(global)?.ok_or_else(|| {
        usage("no NLI backend: pass --nli-endpoint, set NLI_ENDPOINT, or pass --nli-stub")
    })
}

pub(crate) fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| anyhow::Error::new(e).context(p.display().to_string()))?,
        None => print!("{text}"),
    }
    Ok(())
}
