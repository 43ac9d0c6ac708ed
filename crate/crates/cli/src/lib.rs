//! The `tarjama` command: pipeline stages as subcommands.
//!
//! Every invocation appends one line to the run manifest with the effective
//! config hash, input and output digests and tool versions. Exit codes: 0 on
//! success, 1 for usage and validation errors, 2 for I/O and config errors.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};
use log::error;

use crate::commands::Run;
use crate::config::PipelineConfig;
use crate::error::{CliError, EXIT_OK, EXIT_VALIDATION};
use crate::manifest::{RunRecord, Versions};

#[derive(Debug, Parser)]
#[command(name = "tarjama", version, about = "Translate, score, rank and curate multi-turn SFT corpora")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run manifest to append to.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Seed for all random choices.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a corpus into token-budgeted translation units.
    Decompose(commands::corpus::DecomposeArgs),
    /// Put translation units on the work queue, one task set per translator.
    Enqueue(commands::queue::EnqueueArgs),
    /// Run a worker until the queue is drained.
    Work(commands::queue::WorkArgs),
    /// Rebuild candidate conversations from completed tasks.
    Reconstruct(commands::queue::ReconstructArgs),
    /// Compute LR, SCR and token counts for every candidate.
    Score(commands::evaluate::ScoreArgs),
    /// Rank candidates per conversation and pick winners.
    Rank(commands::evaluate::RankArgs),
    /// Fit Bradley-Terry scores to pairwise preferences.
    BtFit(commands::evaluate::BtFitArgs),
    /// Per-split statistics report.
    Stats(commands::evaluate::StatsArgs),
    /// Drop examples below quality thresholds or with CJK contamination.
    Filter(commands::evaluate::FilterArgs),
    /// Draw a category-stratified subset of a corpus.
    Sample(commands::corpus::SampleArgs),
    /// Show queue counts.
    QueueStatus(commands::queue::QueueStatusArgs),
    /// Run every stage end to end.
    Pipeline(commands::pipeline::PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Decompose(_) => "decompose",
            Self::Enqueue(_) => "enqueue",
            Self::Work(_) => "work",
            Self::Reconstruct(_) => "reconstruct",
            Self::Score(_) => "score",
            Self::Rank(_) => "rank",
            Self::BtFit(_) => "bt-fit",
            Self::Stats(_) => "stats",
            Self::Filter(_) => "filter",
            Self::Sample(_) => "sample",
            Self::QueueStatus(_) => "queue-status",
            Self::Pipeline(_) => "pipeline",
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
        .format_timestamp_millis()
        .try_init();
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    init_logging(cli.verbose);

    let started = manifest::now_ms();
    let mut config = match &cli.config {
        Some(path) => match PipelineConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return e.exit_code();
            }
        },
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(m) = &cli.manifest {
        config.manifest = m.clone();
    }

    let mut run = Run::new(config);
    let result = commands::dispatch(&cli.command, &mut run);
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    let record = RunRecord {
        started_at_ms: started,
        finished_at_ms: manifest::now_ms(),
        command: cli.command.name().to_owned(),
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        config_path: cli.config.clone(),
        config_hash: run.config.hash(),
        seed: run.config.seed,
        inputs: run.inputs.iter().map(|p| manifest::digest(p)).collect(),
        outputs: run.outputs.iter().map(|p| manifest::digest(p)).collect(),
        versions: Versions {
            tarjama: env!("CARGO_PKG_VERSION").to_owned(),
            unicode: tarjama_core::metrics::unicode_version_string(),
            tokenizer: run.config.tokenizer.name.clone(),
        },
        exit_code: code,
        error: result.as_ref().err().map(CliError::to_string),
    };
    if let Err(e) = manifest::append(&run.config.manifest, &record) {
        eprintln!("warning: cannot append run manifest {}: {e}", run.config.manifest.display());
    }
    code
}
