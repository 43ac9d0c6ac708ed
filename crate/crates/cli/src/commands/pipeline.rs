use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use clap::{Args, ValueEnum};
use tarjama_core::metrics::ScoredExample;
use tarjama_core::stats::{aggregate_by_split, emit_report, summarize_examples, ReportFormat};
use tarjama_core::Conversation;
use tarjama_queue::{worker_loop, BackendConfig, Translator, WorkerOptions, WorkerReport};

use super::corpus::decompose_corpus;
use super::evaluate::{
    filter_scored, rank_all, report_meta, reward_scores, score_candidates, select_winners, winners_of,
};
use super::queue::{candidates_from_done, enqueue_for, open_queue};
use super::{backends, read_corpus, reward_scorer, write_json, write_records, write_text, ChunkArgs, Run};
use crate::error::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// Use the backends from the config file.
    Config,
    /// A single backend that returns its input unchanged.
    MockIdentity,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Source corpus JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for every intermediate and final file.
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendChoice::Config)]
    pub backend: BackendChoice,
    /// Worker threads draining the queue.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub lenient: bool,
    #[command(flatten)]
    pub chunk: ChunkArgs,
}

/// decompose -> enqueue -> work -> reconstruct -> score -> rank -> filter -> report.
///
/// Files written to the output directory: `units.jsonl`, `candidates.jsonl`,
/// `scored.jsonl`, `ranking.jsonl`, `winners.jsonl`, `translated.jsonl` (the
/// best candidate per conversation, in input order), `curated.jsonl` and
/// `rejected.jsonl` (after filtering), `report.{md,csv,json}` and
/// `summary.json` over the translated corpus, and `curated_report.md`.
pub fn pipeline(args: &PipelineArgs, run: &mut Run) -> CliResult<()> {
    args.chunk.apply(&mut run.config);
    if args.backend == BackendChoice::MockIdentity {
        run.config.backends = vec![BackendConfig::mock_identity("mock-identity")];
    }
    if args.workers == 0 {
        return Err(CliError::validation("--workers must be positive"));
    }
    let out = args.output_dir.clone();
    run.config.queue_dir = out.join("queue");
    run.config.validate()?;

    let sources = read_corpus(&run.input(&args.input), args.lenient)?;
    if sources.is_empty() {
        return Err(CliError::validation("input corpus is empty"));
    }
    let units = decompose_corpus(&sources, &run.config)?;
    write_records(&run.output(&out.join("units.jsonl")), &units)?;

    let queue = open_queue(&run.config)?;
    let translators: Vec<String> = run.config.backends.iter().map(|b| b.id.clone()).collect();
    enqueue_for(&queue, &units, &translators, run.config.batch_size)?;

    let config = &run.config;
    let reports: Vec<CliResult<WorkerReport>> = thread::scope(|s| {
        let handles: Vec<_> = (0..args.workers)
            .map(|w| {
                let queue = &queue;
                s.spawn(move || {
                    let backends = backends(config)?;
                    let translators: Vec<&dyn Translator> = backends.iter().map(|b| b as &dyn Translator).collect();
                    let options = WorkerOptions {
                        ttl: config.ttl(),
                        poll: Duration::from_millis(50),
                        ..WorkerOptions::new(format!("pipeline-{}-{w}", std::process::id()))
                    };
                    Ok(worker_loop(queue, &translators, &options)?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    for r in reports {
        r?;
    }
    let failed = queue.failed_records()?;
    for f in &failed {
        let last = f.leases.last().and_then(|l| l.last_error.clone()).unwrap_or_default();
        log::warn!("task {} for `{}` failed: {last}", f.task.task_id, f.task.translator_id);
    }

    let (candidates, problems) = candidates_from_done(&queue.done_records()?, Some(&sources));
    for p in &problems {
        log::warn!("dropping candidate: {p}");
    }
    if candidates.is_empty() {
        return Err(CliError::validation(format!(
            "no complete candidates ({} failed tasks, {} incomplete candidates)",
            failed.len(),
            problems.len()
        )));
    }
    write_records(&run.output(&out.join("candidates.jsonl")), &candidates)?;

    let scored = score_candidates(&sources, &candidates, &run.config)?;
    write_records(&run.output(&out.join("scored.jsonl")), &scored)?;

    let (rewards, warnings) = match reward_scorer(&run.config)? {
        Some(scorer) => reward_scores(scorer.as_ref(), &sources, &candidates),
        None => Default::default(),
    };
    let ranking = rank_all(&scored, &rewards, &warnings, &run.config)?;
    write_records(&run.output(&out.join("ranking.jsonl")), &ranking)?;
    let winners = winners_of(&ranking);
    write_records(&run.output(&out.join("winners.jsonl")), &winners)?;

    // Winners back in input order.
    let picked = select_winners(&winners, &candidates)?;
    let position = |id: &str| sources.iter().position(|c| c.id == id).unwrap_or(usize::MAX);
    let mut translated: Vec<&Conversation> = picked.iter().map(|c| &c.conversation).collect();
    translated.sort_by_key(|c| position(&c.id));
    write_records(&run.output(&out.join("translated.jsonl")), translated.iter().copied())?;

    let winner_scores: Vec<ScoredExample> = scored
        .iter()
        .filter(|e| winners.iter().any(|w| w.conversation_id == e.conversation_id && w.translator_id == e.translator_id))
        .cloned()
        .collect();
    let meta = report_meta(&run.config);
    let split_stats = aggregate_by_split(&winner_scores);
    for (format, ext) in [(ReportFormat::Markdown, "md"), (ReportFormat::Csv, "csv"), (ReportFormat::Json, "json")] {
        let path = out.join(format!("report.{ext}"));
        write_text(&run.output(&path), &emit_report(&split_stats, &meta, format))?;
    }
    let qualities: Vec<_> = winner_scores.iter().map(ScoredExample::quality).collect();
    write_json(&run.output(&out.join("summary.json")), &summarize_examples(&qualities).map_err(invalid)?)?;

    let (kept, rejected) = filter_scored(winner_scores, &run.config);
    let curated: Vec<&Conversation> =
        translated.iter().copied().filter(|c| kept.iter().any(|k| k.conversation_id == c.id)).collect();
    write_records(&run.output(&out.join("curated.jsonl")), curated.iter().copied())?;
    write_records(&run.output(&out.join("rejected.jsonl")), &rejected)?;
    write_text(
        &run.output(&out.join("curated_report.md")),
        &emit_report(&aggregate_by_split(&kept), &meta, ReportFormat::Markdown),
    )?;

    eprintln!(
        "{} conversations, {} units, {} candidates, {} translated, {} curated, {} failed tasks",
        sources.len(),
        units.len(),
        candidates.len(),
        translated.len(),
        curated.len(),
        failed.len()
    );
    Ok(())
}
