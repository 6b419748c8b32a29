//! `hirec` command-line interface and HTTP service.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, files, queries,
//! configuration), 2 IO failure while writing, 3 backend failure.

pub mod commands;
pub mod config;
pub mod server;

use std::io::IsTerminal;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use hirec_core::kb::{DEFAULT_DEPARTMENTS, DEFAULT_ITEMS_PER_DEPARTMENT};
use hirec_core::Sex;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// A failed command: process exit code, stable error code, message.
#[derive(Debug, Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub exit: i32,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_INPUT,
            code,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_IO,
            code: "IO_ERROR",
            message: message.into(),
        }
    }

    pub fn backend(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_BACKEND,
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hirec", version, about = "Hierarchical retrieval-augmented test recommendation")]
pub struct Cli {
    /// TOML configuration file (also `HIREC_CONFIG`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic knowledge base (and optionally eval cases).
    GenCorpus(GenCorpusArgs),
    /// Validate a document file, embed it and save the index bundle.
    Ingest(IngestArgs),
    /// Recommend tests for one patient query.
    Recommend(RecommendArgs),
    /// Evaluate a case file.
    Evaluate(EvalArgs),
    /// Evaluate the four ablation variants of a case file.
    Ablate(EvalArgs),
    /// Serve recommendations over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Comma-separated department names.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DEPARTMENTS.map(String::from))]
    pub departments: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_ITEMS_PER_DEPARTMENT)]
    pub items: usize,
    /// Output document file (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write generated evaluation cases here.
    #[arg(long)]
    pub cases_out: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub cases: usize,
    /// Seed for case generation; defaults to `--seed`.
    #[arg(long)]
    pub cases_seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Document file (JSONL).
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Index snapshot to write; documents go to `<index>.docs.jsonl`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    #[arg(long)]
    pub no_memory: bool,
    #[arg(long)]
    pub no_department_layer: bool,
    #[arg(long)]
    pub single_kb: bool,
    /// Sets both retrieval depths.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub root_top_k: Option<usize>,
    #[arg(long)]
    pub dept_top_k: Option<usize>,
    #[arg(long)]
    pub max_departments: Option<usize>,
    #[arg(long)]
    pub max_recommendations: Option<usize>,
    #[arg(long)]
    pub min_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Query as inline JSON.
    #[arg(long, conflicts_with_all = ["query_file", "symptoms"])]
    pub query_json: Option<String>,
    /// Query JSON file, `-` for stdin.
    #[arg(long, conflicts_with = "symptoms")]
    pub query_file: Option<PathBuf>,
    #[arg(long)]
    pub symptoms: Option<String>,
    #[arg(long, requires = "symptoms")]
    pub age: Option<i64>,
    #[arg(long, requires = "symptoms", value_parser = parse_sex)]
    pub sex: Option<Sex>,
    #[arg(long, requires = "symptoms")]
    pub history: Vec<String>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Machine-readable result on stdout.
    #[arg(long)]
    pub json: bool,
    /// Print the reasoning report (stderr when --json is set).
    #[arg(long)]
    pub explain: bool,
    /// Zero the per-layer timings so output is reproducible.
    #[arg(long)]
    pub omit_timings: bool,
}

fn parse_sex(s: &str) -> Result<Sex, String> {
    match s.to_ascii_uppercase().as_str() {
        "F" => Ok(Sex::F),
        "M" => Ok(Sex::M),
        "OTHER" => Ok(Sex::Other),
        _ => Err(format!("unknown sex `{s}` (F, M or OTHER)")),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Case file (JSONL).
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Report JSON on stdout; tables go to stderr.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Address to bind, e.g. 127.0.0.1:8080.
    #[arg(long)]
    pub bind: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[arg(long)]
    pub omit_timings: bool,
}

fn init_logging(filter: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(filter)
        .try_init();
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let mut cfg = match config::CliConfig::from_process_env(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[CONFIG]: {e}");
            return EXIT_INPUT;
        }
    };
    match cli.verbose {
        0 => {}
        1 => cfg.log = "info".into(),
        _ => cfg.log = "debug".into(),
    }
    init_logging(&cfg.log);
    let outcome = match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(&a),
        Command::Ingest(a) => commands::ingest(&cfg, &a),
        Command::Recommend(a) => commands::recommend(cfg, &a),
        Command::Evaluate(a) => commands::evaluate(cfg, &a),
        Command::Ablate(a) => commands::ablate(cfg, &a),
        Command::Serve(a) => commands::serve(cfg, &a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code, e.message);
            e.exit
        }
    }
}
