use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use tarjama_core::{Candidate, Conversation, TranslatedUnit, TranslationUnit};
use tarjama_queue::{worker_loop, DoneRecord, Queue, Trace, Translator, WorkerOptions};

use super::{backends, read_corpus, read_records, write_records, Run};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Args)]
pub struct QueueArgs {
    /// Queue directory shared by all workers.
    #[arg(long)]
    pub queue_dir: Option<PathBuf>,
}

impl QueueArgs {
    fn apply(&self, config: &mut PipelineConfig) {
        if let Some(dir) = &self.queue_dir {
            config.queue_dir = dir.clone();
        }
    }
}

pub fn open_queue(config: &PipelineConfig) -> CliResult<Queue> {
    Ok(Queue::open(&config.queue_dir)?.with_max_attempts(config.max_attempts))
}

#[derive(Debug, Clone, Args)]
pub struct EnqueueArgs {
    /// Translation units JSONL from `decompose`.
    #[arg(long)]
    pub units: PathBuf,
    /// Translator id to enqueue for; repeatable. Defaults to every configured backend.
    #[arg(long = "translator")]
    pub translators: Vec<String>,
    /// Units per task.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[command(flatten)]
    pub queue: QueueArgs,
}

pub fn enqueue(args: &EnqueueArgs, run: &mut Run) -> CliResult<()> {
    args.queue.apply(&mut run.config);
    if let Some(b) = args.batch_size {
        run.config.batch_size = b;
    }
    run.config.validate()?;
    let path = run.input(&args.units);
    let units: Vec<TranslationUnit> = read_records(&path)?;
    let queue = open_queue(&run.config)?;
    let translators: Vec<String> = if args.translators.is_empty() {
        run.config.backends.iter().map(|b| b.id.clone()).collect()
    } else {
        args.translators.clone()
    };
    enqueue_for(&queue, &units, &translators, run.config.batch_size)?;
    Ok(())
}

pub fn enqueue_for(queue: &Queue, units: &[TranslationUnit], translators: &[String], batch_size: usize) -> CliResult<usize> {
    let before = queue.status()?.pending;
    let mut total = 0;
    for t in translators {
        total += queue.enqueue(units, t, batch_size)?.len();
    }
    let added = queue.status()?.pending - before;
    eprintln!("{total} tasks for {} translator(s), {added} new", translators.len());
    Ok(total)
}

#[derive(Debug, Clone, Args)]
pub struct WorkArgs {
    /// Identifier recorded in leases and done records.
    #[arg(long)]
    pub worker_id: String,
    /// Lease time-to-live in seconds.
    #[arg(long)]
    pub ttl: Option<f64>,
    /// Attempts before a task is moved to failed/.
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Stop after this many leases.
    #[arg(long)]
    pub max_tasks: Option<usize>,
    /// Exit as soon as nothing can be acquired instead of waiting for
    /// other workers' leases to finish or expire.
    #[arg(long)]
    pub no_wait: bool,
    /// Milliseconds between polls while waiting.
    #[arg(long, default_value_t = 200)]
    pub poll_ms: u64,
    /// Append lease events to this JSONL file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub queue: QueueArgs,
}

pub fn work(args: &WorkArgs, run: &mut Run) -> CliResult<()> {
    args.queue.apply(&mut run.config);
    if let Some(ttl) = args.ttl {
        run.config.ttl_secs = ttl;
    }
    if let Some(m) = args.max_attempts {
        run.config.max_attempts = m;
    }
    run.config.validate()?;
    let mut queue = open_queue(&run.config)?;
    if let Some(trace) = &args.trace {
        queue = queue.with_trace(Trace::new(trace));
    }
    let backends = backends(&run.config)?;
    let translators: Vec<&dyn Translator> = backends.iter().map(|b| b as &dyn Translator).collect();
    let options = WorkerOptions {
        ttl: run.config.ttl(),
        poll: Duration::from_millis(args.poll_ms),
        max_tasks: args.max_tasks,
        wait: !args.no_wait,
        ..WorkerOptions::new(&args.worker_id)
    };
    let report = worker_loop(&queue, &translators, &options)?;
    println!("{}", report.processed());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    /// Candidate conversations JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Source corpus; when given, every candidate is checked against its source structure.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Skip conversations with missing units instead of failing.
    #[arg(long)]
    pub allow_partial: bool,
    #[command(flatten)]
    pub queue: QueueArgs,
}

pub fn reconstruct(args: &ReconstructArgs, run: &mut Run) -> CliResult<()> {
    args.queue.apply(&mut run.config);
    run.config.validate()?;
    let sources = match &args.sources {
        Some(p) => Some(read_corpus(&run.input(p), false)?),
        None => None,
    };
    let output = run.output(&args.output);
    let queue = open_queue(&run.config)?;
    let done = queue.done_records()?;
    let (candidates, problems) = candidates_from_done(&done, sources.as_deref());
    for p in &problems {
        log::warn!("{p}");
    }
    if !problems.is_empty() && !args.allow_partial {
        return Err(CliError::validation(format!(
            "{} candidate(s) could not be rebuilt; first: {}",
            problems.len(),
            problems[0]
        )));
    }
    write_records(&output, &candidates)?;
    eprintln!("{} candidates from {} done tasks", candidates.len(), done.len());
    Ok(())
}

/// Groups done units by (conversation, translator) and rebuilds candidates,
/// sorted by conversation id then translator id. Groups that fail to rebuild
/// or do not match their source are reported instead.
pub fn candidates_from_done(done: &[DoneRecord], sources: Option<&[Conversation]>) -> (Vec<Candidate>, Vec<String>) {
    let mut groups: BTreeMap<(String, String), Vec<TranslatedUnit>> = BTreeMap::new();
    for record in done {
        for u in &record.units {
            groups
                .entry((u.unit.conversation_id.clone(), u.translator_id.clone()))
                .or_default()
                .push(u.clone());
        }
    }
    let by_id: Option<BTreeMap<&str, &Conversation>> =
        sources.map(|s| s.iter().map(|c| (c.id.as_str(), c)).collect());
    let mut candidates = Vec::new();
    let mut problems = Vec::new();
    for ((conv, translator), units) in groups {
        let built = Candidate::from_units(&units).and_then(|c| {
            if let Some(by_id) = &by_id {
                match by_id.get(conv.as_str()) {
                    Some(source) => c.validate_against(source)?,
                    None => {
                        return Err(tarjama_core::CorpusError::Structure {
                            conversation_id: conv.clone(),
                            detail: "no such conversation in the sources".into(),
                        })
                    }
                }
            }
            Ok(c)
        });
        match built {
            Ok(c) => candidates.push(c),
            Err(e) => problems.push(format!("translator `{translator}`: {e}")),
        }
    }
    (candidates, problems)
}

#[derive(Debug, Clone, Args)]
pub struct QueueStatusArgs {
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub queue: QueueArgs,
}

pub fn queue_status(args: &QueueStatusArgs, run: &mut Run) -> CliResult<()> {
    args.queue.apply(&mut run.config);
    let dir: &Path = &run.config.queue_dir;
    if !dir.is_dir() {
        return Err(CliError::io(format!("{}: queue directory does not exist", dir.display())));
    }
    let status = open_queue(&run.config)?.status()?;
    if args.json {
        println!("{}", serde_json::to_string(&status).expect("status serializes"));
    } else {
        println!("pending {}\nleased  {}\ndone    {}\nfailed  {}", status.pending, status.leased, status.done, status.failed);
    }
    Ok(())
}
