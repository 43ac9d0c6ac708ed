use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tarjama_core::metrics::{score_example, ScoredExample};
use tarjama_core::ranking::{bt_fit as fit, rank_scored, BtOptions, PreferenceRecord, RankedCandidateSet, RewardScorer};
use tarjama_core::stats::{
    aggregate_by_split, apply_filter, emit_report, summarize_examples, FilterInput, RejectReason, ReportFormat,
    ReportMeta,
};
use tarjama_core::{Candidate, Conversation};

use super::{read_corpus, read_records, reward_scorer, write_json, write_records, write_text, Run};
use crate::config::PipelineConfig;
use crate::error::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Source corpus JSONL.
    #[arg(long)]
    pub sources: PathBuf,
    /// Candidate JSONL from `reconstruct`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Scored examples JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Length-ratio penalty strength.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Script-purity leeway threshold.
    #[arg(long)]
    pub tau: Option<f64>,
}

fn source_index(sources: &[Conversation]) -> BTreeMap<&str, &Conversation> {
    sources.iter().map(|c| (c.id.as_str(), c)).collect()
}

/// Scores every candidate against its source, in candidate order.
pub fn score_candidates(
    sources: &[Conversation],
    candidates: &[Candidate],
    config: &PipelineConfig,
) -> CliResult<Vec<ScoredExample>> {
    let tokenizer = config.analysis_tokenizer()?;
    let by_id = source_index(sources);
    candidates
        .iter()
        .map(|c| {
            let source = by_id.get(c.conversation_id.as_str()).ok_or_else(|| {
                CliError::validation(format!("candidate for unknown conversation `{}`", c.conversation_id))
            })?;
            let q = score_example(source, c, &config.metrics, &tokenizer)?;
            Ok(ScoredExample::new(source, c, q))
        })
        .collect()
}

pub fn score(args: &ScoreArgs, run: &mut Run) -> CliResult<()> {
    if let Some(a) = args.alpha {
        run.config.metrics.alpha = a;
    }
    if let Some(t) = args.tau {
        run.config.metrics.tau = t;
    }
    run.config.validate()?;
    let sources = read_corpus(&run.input(&args.sources), false)?;
    let candidates: Vec<Candidate> = read_records(&run.input(&args.candidates))?;
    let output = run.output(&args.output);
    let scored = score_candidates(&sources, &candidates, &run.config)?;
    write_records(&output, &scored)?;
    eprintln!("scored {} candidates", scored.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    /// Scored examples JSONL from `score`.
    #[arg(long)]
    pub scored: PathBuf,
    /// Winners JSONL: one `{conversation_id, translator_id, combined}` row per conversation.
    #[arg(long)]
    pub winners: PathBuf,
    /// Full ranking JSONL, every candidate per conversation, best first.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Source corpus; with `--candidates`, enables the configured reward scorer.
    #[arg(long, requires = "candidates")]
    pub sources: Option<PathBuf>,
    /// Candidate JSONL; with `--select`, the winning conversations are written out.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Write the winning candidate of each conversation here.
    #[arg(long, requires = "candidates")]
    pub select: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub conversation_id: String,
    pub translator_id: String,
    pub combined: f64,
}

/// Ranks scored candidates per conversation, sorted by conversation id.
/// Reward scores are looked up by (conversation, translator).
pub fn rank_all(
    scored: &[ScoredExample],
    rewards: &Rewards,
    warnings: &Warnings,
    config: &PipelineConfig,
) -> CliResult<Vec<RankedCandidateSet>> {
    let mut groups: BTreeMap<&str, Vec<&ScoredExample>> = BTreeMap::new();
    for e in scored {
        groups.entry(&e.conversation_id).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|(conv, examples)| {
            let mut seen = std::collections::BTreeSet::new();
            let entries = examples
                .iter()
                .map(|e| {
                    if !seen.insert(&e.translator_id) {
                        return Err(CliError::validation(format!(
                            "conversation `{conv}` has two candidates from `{}`",
                            e.translator_id
                        )));
                    }
                    let rm = rewards.get(&(conv.to_owned(), e.translator_id.clone())).copied();
                    Ok((e.translator_id.clone(), e.quality(), rm))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let notes = warnings.get(conv).cloned().unwrap_or_default();
            rank_scored(conv, entries, &config.weights, notes).map_err(invalid)
        })
        .collect()
}

/// Reward score per (conversation id, translator id).
pub type Rewards = BTreeMap<(String, String), f64>;
/// Scorer failure messages per conversation id.
pub type Warnings = BTreeMap<String, Vec<String>>;

/// Runs the reward scorer over every candidate. Failures are recorded as
/// warnings and leave the candidate without a reward score.
pub fn reward_scores(
    scorer: &dyn RewardScorer,
    sources: &[Conversation],
    candidates: &[Candidate],
) -> (Rewards, Warnings) {
    let by_id = source_index(sources);
    let mut scores = BTreeMap::new();
    let mut warnings: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in candidates {
        let Some(source) = by_id.get(c.conversation_id.as_str()) else { continue };
        match scorer.score(source, c) {
            Ok(s) => {
                scores.insert((c.conversation_id.clone(), c.translator_id.clone()), s);
            }
            Err(e) => {
                let msg = format!("reward scorer failed for `{}` / `{}`: {e}", c.conversation_id, c.translator_id);
                log::warn!("{msg}");
                warnings.entry(c.conversation_id.clone()).or_default().push(msg);
            }
        }
    }
    (scores, warnings)
}

pub fn winners_of(ranking: &[RankedCandidateSet]) -> Vec<Winner> {
    ranking
        .iter()
        .map(|set| Winner {
            conversation_id: set.conversation_id.clone(),
            translator_id: set.winner().translator_id.clone(),
            combined: set.winner().combined,
        })
        .collect()
}

pub fn select_winners<'a>(winners: &[Winner], candidates: &'a [Candidate]) -> CliResult<Vec<&'a Candidate>> {
    let by_key: BTreeMap<(&str, &str), &Candidate> = candidates
        .iter()
        .map(|c| ((c.conversation_id.as_str(), c.translator_id.as_str()), c))
        .collect();
    winners
        .iter()
        .map(|w| {
            by_key.get(&(w.conversation_id.as_str(), w.translator_id.as_str())).copied().ok_or_else(|| {
                CliError::validation(format!(
                    "no candidate from `{}` for conversation `{}`",
                    w.translator_id, w.conversation_id
                ))
            })
        })
        .collect()
}

pub fn rank(args: &RankArgs, run: &mut Run) -> CliResult<()> {
    run.config.validate()?;
    let scored: Vec<ScoredExample> = read_records(&run.input(&args.scored))?;
    let candidates: Option<Vec<Candidate>> = match &args.candidates {
        Some(p) => Some(read_records(&run.input(p))?),
        None => None,
    };
    let sources = match &args.sources {
        Some(p) => Some(read_corpus(&run.input(p), false)?),
        None => None,
    };
    let (rewards, warnings) = match (reward_scorer(&run.config)?, &sources, &candidates) {
        (Some(scorer), Some(s), Some(c)) => reward_scores(scorer.as_ref(), s, c),
        (Some(_), _, _) => {
            log::warn!("reward scorer configured but --sources/--candidates not given; ranking on LR and SCR");
            Default::default()
        }
        _ => Default::default(),
    };
    let ranking = rank_all(&scored, &rewards, &warnings, &run.config)?;
    let winners = winners_of(&ranking);
    write_records(&run.output(&args.winners), &winners)?;
    if let Some(p) = &args.ranking {
        write_records(&run.output(p), &ranking)?;
    }
    if let (Some(p), Some(c)) = (&args.select, &candidates) {
        let picked = select_winners(&winners, c)?;
        let conversations: Vec<&Conversation> = picked.iter().map(|c| &c.conversation).collect();
        write_records(&run.output(p), conversations.iter().copied())?;
    }
    eprintln!("ranked {} conversations", ranking.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct BtFitArgs {
    /// CSV with header `winner,loser,count`.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV with header `system,score`, best first.
    #[arg(long)]
    pub output: PathBuf,
    /// Pseudo-wins added to every ordered pair.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ScoreRow<'a> {
    system: &'a str,
    score: f64,
}

pub fn bt_fit(args: &BtFitArgs, run: &mut Run) -> CliResult<()> {
    let input = run.input(&args.input);
    let output = run.output(&args.output);
    let mut reader = csv::Reader::from_path(&input).map_err(|e| CliError::io_at(&input, e))?;
    let prefs = reader
        .deserialize::<PreferenceRecord>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::validation(format!("{}: row {}: {e}", input.display(), i + 1))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut options = BtOptions::default();
    if let Some(e) = args.epsilon {
        options.epsilon = e;
    }
    if let Some(m) = args.max_iters {
        options.max_iters = m;
    }
    let fitted = fit(&prefs, &options).map_err(invalid)?;
    if !fitted.converged {
        log::warn!("Bradley-Terry fit stopped after {} iterations without converging", fitted.iterations);
    }
    let mut rows: Vec<(&String, &f64)> = fitted.scores.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut writer = csv::Writer::from_path(&output).map_err(|e| CliError::io_at(&output, e))?;
    for (system, score) in rows {
        writer.serialize(ScoreRow { system, score: *score }).map_err(|e| CliError::io_at(&output, e))?;
    }
    writer.flush().map_err(|e| CliError::io_at(&output, e))?;
    eprintln!("fitted {} systems in {} iterations", fitted.scores.len(), fitted.iterations);
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Scored examples JSONL.
    #[arg(long)]
    pub scored: PathBuf,
    /// markdown, csv or json.
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a whole-corpus summary as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn report_meta(config: &PipelineConfig) -> ReportMeta {
    ReportMeta {
        tokenizer: config.analysis_spec().name.clone(),
        alpha: config.metrics.alpha,
        tau: config.metrics.tau,
        unicode_version: tarjama_core::metrics::unicode_version_string(),
    }
}

pub fn stats(args: &StatsArgs, run: &mut Run) -> CliResult<()> {
    run.config.validate()?;
    let scored: Vec<ScoredExample> = read_records(&run.input(&args.scored))?;
    let report = emit_report(&aggregate_by_split(&scored), &report_meta(&run.config), args.format);
    match &args.output {
        Some(p) => write_text(&run.output(p), &report)?,
        None => print!("{report}"),
    }
    if let Some(p) = &args.summary {
        let qualities: Vec<_> = scored.iter().map(ScoredExample::quality).collect();
        let summary = summarize_examples(&qualities).map_err(invalid)?;
        write_json(&run.output(p), &summary)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Scored examples JSONL.
    #[arg(long)]
    pub scored: PathBuf,
    /// Kept examples JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Rejected examples with reasons, JSONL.
    #[arg(long)]
    pub rejected: Option<PathBuf>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long)]
    pub min_scr: Option<f64>,
    /// Keep examples containing CJK ideographs.
    #[arg(long)]
    pub allow_cjk: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    #[serde(flatten)]
    pub example: ScoredExample,
    pub reasons: Vec<RejectReason>,
}

pub fn filter_scored(scored: Vec<ScoredExample>, config: &PipelineConfig) -> (Vec<ScoredExample>, Vec<Rejection>) {
    let outcome = apply_filter(scored, |e| FilterInput::from_scored(e), &config.filter);
    let rejected = outcome
        .rejected
        .into_iter()
        .map(|(example, reasons)| Rejection { example, reasons })
        .collect();
    (outcome.kept, rejected)
}

pub fn filter(args: &FilterArgs, run: &mut Run) -> CliResult<()> {
    if let Some(v) = args.min_lr {
        run.config.filter.min_lr = v;
    }
    if let Some(v) = args.min_scr {
        run.config.filter.min_scr = v;
    }
    if args.allow_cjk {
        run.config.filter.reject_cjk = false;
    }
    run.config.validate()?;
    let scored: Vec<ScoredExample> = read_records(&run.input(&args.scored))?;
    let total = scored.len();
    let (kept, rejected) = filter_scored(scored, &run.config);
    write_records(&run.output(&args.output), &kept)?;
    if let Some(p) = &args.rejected {
        write_records(&run.output(p), &rejected)?;
    }
    eprintln!("kept {} of {total}", kept.len());
    Ok(())
}
