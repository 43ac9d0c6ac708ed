pub mod corpus;
pub mod evaluate;
pub mod pipeline;
pub mod queue;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tarjama_core::corpus::{read_jsonl, write_jsonl};
use tarjama_core::ranking::{CommandScorer, RewardScorer};
use tarjama_core::{parse_corpus, Conversation, ParseMode};
use tarjama_queue::{Backend, Backoff, HttpScorer};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::Command;

/// State of one invocation: the effective config and the files it touched.
#[derive(Debug)]
pub struct Run {
    pub config: PipelineConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(config: PipelineConfig) -> Self {
        Self { config, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_owned());
        path.to_owned()
    }

    pub fn output(&mut self, path: &Path) -> PathBuf {
        self.outputs.push(path.to_owned());
        path.to_owned()
    }
}

pub fn dispatch(command: &Command, run: &mut Run) -> CliResult<()> {
    match command {
        Command::Decompose(a) => corpus::decompose(a, run),
        Command::Enqueue(a) => queue::enqueue(a, run),
        Command::Work(a) => queue::work(a, run),
        Command::Reconstruct(a) => queue::reconstruct(a, run),
        Command::Score(a) => evaluate::score(a, run),
        Command::Rank(a) => evaluate::rank(a, run),
        Command::BtFit(a) => evaluate::bt_fit(a, run),
        Command::Stats(a) => evaluate::stats(a, run),
        Command::Filter(a) => evaluate::filter(a, run),
        Command::Sample(a) => corpus::sample(a, run),
        Command::QueueStatus(a) => queue::queue_status(a, run),
        Command::Pipeline(a) => pipeline::pipeline(a, run),
    }
}

/// Chunk budget overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ChunkArgs {
    /// Target chunk length in tokens.
    #[arg(long)]
    pub target_tokens: Option<usize>,
    /// Search window around the target, in tokens.
    #[arg(long)]
    pub window_tokens: Option<usize>,
    /// Hard upper bound on chunk length in tokens.
    #[arg(long)]
    pub hard_cap_tokens: Option<usize>,
}

impl ChunkArgs {
    pub fn apply(&self, config: &mut PipelineConfig) {
        if let Some(v) = self.target_tokens {
            config.chunk.target_tokens = v;
        }
        if let Some(v) = self.window_tokens {
            config.chunk.window_tokens = v;
        }
        if let Some(v) = self.hard_cap_tokens {
            config.chunk.hard_cap_tokens = v;
        }
    }
}

pub fn read_corpus(path: &Path, lenient: bool) -> CliResult<Vec<Conversation>> {
    let file = File::open(path).map_err(|e| CliError::io_at(path, e))?;
    let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let parsed = parse_corpus(BufReader::new(file), mode).map_err(|e| CliError::from(e).in_file(path))?;
    for skipped in &parsed.skipped {
        log::warn!("{}: skipped {skipped}", path.display());
    }
    Ok(parsed.conversations)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io_at(path, e))?;
    read_jsonl(BufReader::new(file)).map_err(|e| CliError::from(e).in_file(path))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io_at(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io_at(path, e))
}

pub fn write_records<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> CliResult<()> {
    let writer = create(path)?;
    write_jsonl(writer, records).map_err(|e| CliError::io_at(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut writer = create(path)?;
    writer.write_all(text.as_bytes()).and_then(|_| writer.flush()).map_err(|e| CliError::io_at(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Builds the configured translator backends.
pub fn backends(config: &PipelineConfig) -> CliResult<Vec<Backend>> {
    if config.backends.is_empty() {
        return Err(CliError::io("no translator backends configured"));
    }
    let tokenizer = config.chunk_tokenizer()?;
    config
        .backends
        .iter()
        .map(|b| Backend::new(b.clone(), tokenizer.clone()).map_err(CliError::from))
        .collect()
}

/// The configured reward scorer, if any.
pub fn reward_scorer(config: &PipelineConfig) -> CliResult<Option<Box<dyn RewardScorer>>> {
    let Some(s) = &config.scorer else { return Ok(None) };
    if let Some((program, args)) = s.command.split_first() {
        return Ok(Some(Box::new(CommandScorer::new(program.clone(), args.to_vec()))));
    }
    let endpoint = s.endpoint.clone().ok_or_else(|| CliError::io("scorer has no command or endpoint"))?;
    let backoff = Backoff { max_retries: 3, initial_ms: 500, max_ms: 30_000 };
    let scorer = HttpScorer::new(
        endpoint,
        s.api_key_env.as_deref(),
        std::time::Duration::from_secs(s.timeout_secs),
        backoff,
    )?;
    Ok(Some(Box::new(scorer)))
}
