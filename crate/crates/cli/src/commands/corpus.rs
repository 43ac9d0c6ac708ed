use std::path::PathBuf;

use clap::Args;
use tarjama_core::stats::{stratified_sample, ShortfallMode};
use tarjama_core::{contains_cjk, decompose as decompose_units, ChunkPlan, Conversation, TranslationUnit};

use super::{read_corpus, write_records, ChunkArgs, Run};
use crate::error::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    /// Corpus JSONL, one conversation per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Translation units JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Skip malformed lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
    #[command(flatten)]
    pub chunk: ChunkArgs,
}

pub fn decompose(args: &DecomposeArgs, run: &mut Run) -> CliResult<()> {
    args.chunk.apply(&mut run.config);
    run.config.validate()?;
    let input = run.input(&args.input);
    let output = run.output(&args.output);
    let corpus = read_corpus(&input, args.lenient)?;
    let units = decompose_corpus(&corpus, &run.config)?;
    write_records(&output, &units)?;
    eprintln!("{} conversations -> {} units", corpus.len(), units.len());
    Ok(())
}

/// Chunks and decomposes every conversation, in corpus order.
pub fn decompose_corpus(
    corpus: &[Conversation],
    config: &crate::config::PipelineConfig,
) -> CliResult<Vec<TranslationUnit>> {
    let tokenizer = config.chunk_tokenizer()?;
    let mut units = Vec::new();
    for conversation in corpus {
        let plan = ChunkPlan::with_chunker(conversation, &tokenizer, &config.chunk)?;
        units.extend(decompose_units(conversation, &plan)?);
    }
    Ok(units)
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// Corpus JSONL with a `category` on each conversation.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Total sample size.
    #[arg(long)]
    pub total: Option<usize>,
    /// Category ratio as `name=weight`; repeat for each category.
    #[arg(long = "ratio", value_parser = parse_ratio)]
    pub ratios: Vec<(String, u64)>,
    /// Fill short categories from the others instead of failing.
    #[arg(long)]
    pub redistribute: bool,
    /// Keep conversations containing CJK ideographs.
    #[arg(long)]
    pub keep_cjk: bool,
    #[arg(long)]
    pub lenient: bool,
}

fn parse_ratio(s: &str) -> Result<(String, u64), String> {
    let (name, weight) = s.split_once('=').ok_or_else(|| format!("expected name=weight, got `{s}`"))?;
    let weight = weight.trim().parse().map_err(|e| format!("bad weight in `{s}`: {e}"))?;
    Ok((name.trim().to_owned(), weight))
}

pub fn sample(args: &SampleArgs, run: &mut Run) -> CliResult<()> {
    if !args.ratios.is_empty() {
        run.config.strata.ratios = args.ratios.iter().cloned().collect();
    }
    if let Some(total) = args.total {
        run.config.strata.total = total;
    }
    if args.redistribute {
        run.config.strata.shortfall = ShortfallMode::Redistribute;
    }
    if args.keep_cjk {
        run.config.filter.reject_cjk = false;
    }
    run.config.validate()?;
    let input = run.input(&args.input);
    let output = run.output(&args.output);
    let corpus = read_corpus(&input, args.lenient)?;
    let eligible: Vec<&Conversation> = corpus
        .iter()
        .filter(|c| !run.config.filter.reject_cjk || !c.messages.iter().any(|m| contains_cjk(&m.content)))
        .collect();
    let dropped = corpus.len() - eligible.len();
    if dropped > 0 {
        log::info!("dropped {dropped} conversations containing CJK ideographs");
    }
    let outcome = stratified_sample(&eligible, |c| c.category.as_deref(), &run.config.strata, run.config.seed)
        .map_err(invalid)?;
    let picked: Vec<&Conversation> = outcome.indices.iter().map(|&i| eligible[i]).collect();
    write_records(&output, picked.iter().copied())?;
    let counts: Vec<String> = outcome.counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
    eprintln!("sampled {} conversations ({})", picked.len(), counts.join(", "));
    if picked.is_empty() && run.config.strata.total > 0 {
        return Err(CliError::validation("no conversations matched the sampling categories"));
    }
    Ok(())
}
