//! Per-split statistics, filtering, stratified sampling and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Conversation;
use crate::metrics::{contains_cjk, QualityScore, ScoredExample};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no examples to aggregate")]
    Empty,
    #[error("threshold `{name}` must lie in [0, 1], got {value}")]
    Threshold { name: String, value: f64 },
    #[error("no strata ratios given")]
    NoStrata,
    #[error("ratio for category `{0}` must be positive")]
    ZeroRatio(String),
    #[error("category `{category}` needs {needed} examples but only {available} are available")]
    Insufficient { category: String, needed: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: String,
    pub num_examples: usize,
    pub mean_lr: f64,
    pub mean_scr: f64,
    pub mean_turns: f64,
    pub mean_total_tokens: f64,
    pub p95_tokens: f64,
}

/// Nearest-rank percentile: the `ceil(q * n)`-th smallest value.
pub fn nearest_rank(values: &mut [usize], q: f64) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Some(values[rank - 1])
}

pub fn aggregate_split(scores: &[QualityScore], split: &str) -> Result<SplitStats, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = scores.len() as f64;
    let mean = |f: fn(&QualityScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let mut tokens: Vec<usize> = scores.iter().map(|s| s.tokens).collect();
    Ok(SplitStats {
        split: split.to_string(),
        num_examples: scores.len(),
        mean_lr: mean(|s| s.lr),
        mean_scr: mean(|s| s.scr),
        mean_turns: mean(|s| s.turns as f64),
        mean_total_tokens: mean(|s| s.tokens as f64),
        p95_tokens: nearest_rank(&mut tokens, 0.95).unwrap_or(0) as f64,
    })
}

/// Groups scored examples by split and aggregates each, sorted by split name.
pub fn aggregate_by_split(examples: &[ScoredExample]) -> Vec<SplitStats> {
    let mut groups: BTreeMap<&str, Vec<QualityScore>> = BTreeMap::new();
    for e in examples {
        groups.entry(e.split.as_str()).or_default().push(e.quality());
    }
    groups
        .into_iter()
        .map(|(split, scores)| aggregate_split(&scores, split).expect("groups are non-empty"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub total_examples: usize,
    pub total_tokens: f64,
    pub mean_lr: f64,
    pub mean_scr: f64,
    pub median_turns: f64,
    pub mean_tokens_per_example: f64,
    /// Smallest and largest per-split p95. Exact only when computed from
    /// examples; from split summaries a global p95 is not recoverable.
    pub p95_tokens: (f64, f64),
}

/// Lower weighted median of `(value, weight)` pairs.
fn lower_weighted_median(mut pairs: Vec<(f64, usize)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: usize = pairs.iter().map(|p| p.1).sum();
    let half = total.div_ceil(2);
    let mut acc = 0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= half {
            return *v;
        }
    }
    pairs.last().map_or(0.0, |p| p.0)
}

/// Summary over per-split statistics, weighting each split by its size.
///
/// Median turns is the lower weighted median of the split means; p95 is
/// reported as the range of split p95 values.
pub fn summarize_config(splits: &[SplitStats]) -> Result<ConfigSummary, StatsError> {
    let total: usize = splits.iter().map(|s| s.num_examples).sum();
    if total == 0 {
        return Err(StatsError::Empty);
    }
    let n = total as f64;
    let weighted = |f: fn(&SplitStats) -> f64| splits.iter().map(|s| s.num_examples as f64 * f(s)).sum::<f64>();
    let total_tokens = weighted(|s| s.mean_total_tokens);
    let p95 = splits.iter().map(|s| s.p95_tokens);
    Ok(ConfigSummary {
        total_examples: total,
        total_tokens,
        mean_lr: weighted(|s| s.mean_lr) / n,
        mean_scr: weighted(|s| s.mean_scr) / n,
        median_turns: lower_weighted_median(splits.iter().map(|s| (s.mean_turns, s.num_examples)).collect()),
        mean_tokens_per_example: total_tokens / n,
        p95_tokens: (p95.clone().fold(f64::INFINITY, f64::min), p95.fold(f64::NEG_INFINITY, f64::max)),
    })
}

/// Summary computed directly from examples: exact lower median of turns and
/// a global p95 (reported as a degenerate range).
pub fn summarize_examples(scores: &[QualityScore]) -> Result<ConfigSummary, StatsError> {
    let all = aggregate_split(scores, "all")?;
    let mut turns: Vec<usize> = scores.iter().map(|s| s.turns).collect();
    let median = nearest_rank(&mut turns, 0.5).unwrap_or(0) as f64;
    Ok(ConfigSummary {
        total_examples: all.num_examples,
        total_tokens: scores.iter().map(|s| s.tokens as f64).sum(),
        mean_lr: all.mean_lr,
        mean_scr: all.mean_scr,
        median_turns: median,
        mean_tokens_per_example: all.mean_total_tokens,
        p95_tokens: (all.p95_tokens, all.p95_tokens),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_lr: f64,
    pub min_scr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub min_lr: f64,
    pub min_scr: f64,
    pub reject_cjk: bool,
    pub per_split_overrides: BTreeMap<String, Thresholds>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self { min_lr: 0.3, min_scr: 0.3, reject_cjk: true, per_split_overrides: BTreeMap::new() }
    }
}

impl FilterPolicy {
    pub fn permissive() -> Self {
        Self { min_lr: 0.0, min_scr: 0.0, reject_cjk: false, per_split_overrides: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let check = |name: String, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(StatsError::Threshold { name, value })
            }
        };
        check("min_lr".into(), self.min_lr)?;
        check("min_scr".into(), self.min_scr)?;
        for (split, t) in &self.per_split_overrides {
            check(format!("{split}.min_lr"), t.min_lr)?;
            check(format!("{split}.min_scr"), t.min_scr)?;
        }
        Ok(())
    }

    pub fn thresholds_for(&self, split: &str) -> Thresholds {
        self.per_split_overrides
            .get(split)
            .copied()
            .unwrap_or(Thresholds { min_lr: self.min_lr, min_scr: self.min_scr })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowLr,
    LowScr,
    Cjk,
}

/// What the filter needs to know about one example.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterInput<'a> {
    pub split: &'a str,
    pub lr: f64,
    pub scr: f64,
    pub has_cjk: bool,
}

impl<'a> FilterInput<'a> {
    pub fn from_scored(e: &'a ScoredExample) -> Self {
        Self { split: &e.split, lr: e.lr, scr: e.scr, has_cjk: e.cjk.unwrap_or(false) }
    }

    pub fn from_conversation(c: &'a Conversation, score: &QualityScore) -> Self {
        Self {
            split: &c.split,
            lr: score.lr,
            scr: score.scr,
            has_cjk: c.messages.iter().any(|m| contains_cjk(&m.content)),
        }
    }
}

pub fn reject_reasons(input: &FilterInput<'_>, policy: &FilterPolicy) -> Vec<RejectReason> {
    let t = policy.thresholds_for(input.split);
    let mut reasons = Vec::new();
    if input.lr < t.min_lr {
        reasons.push(RejectReason::LowLr);
    }
    if input.scr < t.min_scr {
        reasons.push(RejectReason::LowScr);
    }
    if policy.reject_cjk && input.has_cjk {
        reasons.push(RejectReason::Cjk);
    }
    reasons
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome<T> {
    pub kept: Vec<T>,
    pub rejected: Vec<(T, Vec<RejectReason>)>,
}

/// Splits `items` into kept and rejected, preserving input order in both.
pub fn apply_filter<T>(
    items: Vec<T>,
    view: impl Fn(&T) -> FilterInput<'_>,
    policy: &FilterPolicy,
) -> FilterOutcome<T> {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for item in items {
        let reasons = reject_reasons(&view(&item), policy);
        if reasons.is_empty() {
            kept.push(item);
        } else {
            rejected.push((item, reasons));
        }
    }
    FilterOutcome { kept, rejected }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortfallMode {
    /// Fail when a category cannot fill its share.
    #[default]
    Strict,
    /// Take what exists and hand the deficit to the other categories.
    Redistribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrataPolicy {
    pub ratios: BTreeMap<String, u64>,
    pub total: usize,
    pub shortfall: ShortfallMode,
}

impl Default for StrataPolicy {
    /// code : science : math = 1 : 1 : 2.
    fn default() -> Self {
        let ratios = [("code", 1), ("science", 1), ("math", 2)].map(|(c, r)| (c.to_string(), r));
        Self { ratios: ratios.into(), total: 200, shortfall: ShortfallMode::Strict }
    }
}

impl StrataPolicy {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.ratios.is_empty() {
            return Err(StatsError::NoStrata);
        }
        if let Some((c, _)) = self.ratios.iter().find(|(_, r)| **r == 0) {
            return Err(StatsError::ZeroRatio(c.clone()));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` by `ratios`. Leftover units go
/// to the largest fractional parts, then the larger ratio, then the
/// category name.
pub fn largest_remainder(ratios: &BTreeMap<String, u64>, total: usize) -> BTreeMap<String, usize> {
    let sum: u128 = ratios.values().map(|r| *r as u128).sum();
    if sum == 0 {
        return ratios.keys().map(|k| (k.clone(), 0)).collect();
    }
    let mut alloc: BTreeMap<String, usize> = BTreeMap::new();
    let mut rems = Vec::new();
    let mut assigned = 0usize;
    for (cat, r) in ratios {
        let num = total as u128 * *r as u128;
        let base = (num / sum) as usize;
        assigned += base;
        alloc.insert(cat.clone(), base);
        rems.push((num % sum, *r, cat.clone()));
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    for (_, _, cat) in rems.into_iter().take(total - assigned) {
        *alloc.get_mut(&cat).unwrap() += 1;
    }
    alloc
}

/// Per-category counts for `policy` given the available population.
pub fn strata_counts(
    policy: &StrataPolicy,
    available: &BTreeMap<String, usize>,
) -> Result<BTreeMap<String, usize>, StatsError> {
    policy.validate()?;
    let avail = |c: &str| available.get(c).copied().unwrap_or(0);
    let alloc = largest_remainder(&policy.ratios, policy.total);
    if policy.shortfall == ShortfallMode::Strict {
        if let Some((c, need)) = alloc.iter().find(|(c, need)| **need > avail(c)) {
            return Err(StatsError::Insufficient { category: c.clone(), needed: *need, available: avail(c) });
        }
        return Ok(alloc);
    }
    let mut fixed: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        let active: BTreeMap<String, u64> =
            policy.ratios.iter().filter(|(c, _)| !fixed.contains_key(*c)).map(|(c, r)| (c.clone(), *r)).collect();
        let remaining = policy.total.saturating_sub(fixed.values().sum());
        let alloc = largest_remainder(&active, remaining);
        let over: Vec<String> = alloc.iter().filter(|(c, n)| **n > avail(c)).map(|(c, _)| c.clone()).collect();
        if over.is_empty() {
            fixed.extend(alloc);
            return Ok(fixed);
        }
        for c in over {
            let a = avail(&c);
            fixed.insert(c, a);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    /// Indices into the input, ascending.
    pub indices: Vec<usize>,
    pub counts: BTreeMap<String, usize>,
}

/// Draws a category-stratified subset, uniformly without replacement within
/// each category. Items whose category is not in the policy are never
/// selected. The result is a pure function of the input and `seed`.
pub fn stratified_sample<T>(
    items: &[T],
    category: impl Fn(&T) -> Option<&str>,
    policy: &StrataPolicy,
    seed: u64,
) -> Result<SampleOutcome, StatsError> {
    let mut pools: BTreeMap<String, Vec<usize>> = policy.ratios.keys().map(|k| (k.clone(), Vec::new())).collect();
    for (i, item) in items.iter().enumerate() {
        if let Some(pool) = category(item).and_then(|c| pools.get_mut(c)) {
            pool.push(i);
        }
    }
    let available = pools.iter().map(|(c, v)| (c.clone(), v.len())).collect();
    let counts = strata_counts(policy, &available)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::new();
    for (cat, pool) in &pools {
        let k = counts[cat];
        for j in sample(&mut rng, pool.len(), k).into_iter() {
            indices.push(pool[j]);
        }
    }
    indices.sort_unstable();
    Ok(SampleOutcome { indices, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tokenizer: String,
    pub alpha: f64,
    pub tau: f64,
    pub unicode_version: String,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "Split",
    "Num Examples",
    "Mean LR",
    "Mean SCR",
    "Mean Turns",
    "Mean Total Tokens",
    "P95 Tokens",
];

fn row_cells(s: &SplitStats) -> [String; 7] {
    [
        s.split.clone(),
        s.num_examples.to_string(),
        format!("{:.4}", s.mean_lr),
        format!("{:.4}", s.mean_scr),
        format!("{:.2}", s.mean_turns),
        format!("{:.2}", s.mean_total_tokens),
        format!("{:.2}", s.p95_tokens),
    ]
}

fn sorted(stats: &[SplitStats]) -> Vec<&SplitStats> {
    let mut rows: Vec<&SplitStats> = stats.iter().collect();
    rows.sort_by(|a, b| a.split.cmp(&b.split));
    rows
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

pub fn emit_report(stats: &[SplitStats], meta: &ReportMeta, format: ReportFormat) -> String {
    let rows = sorted(stats);
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "<!-- tokenizer: {}; alpha: {}; tau: {}; unicode: {} -->",
                meta.tokenizer, meta.alpha, meta.tau, meta.unicode_version
            );
            let _ = writeln!(out, "| {} |", REPORT_COLUMNS.join(" | "));
            let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|");
            for s in rows {
                let cells = row_cells(s).map(|c| c.replace('|', "\\|"));
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = format!(
                "# tokenizer: {}; alpha: {}; tau: {}; unicode: {}\n",
                meta.tokenizer, meta.alpha, meta.tau, meta.unicode_version
            );
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).expect("write to memory");
            for s in rows {
                w.write_record(row_cells(s)).expect("write to memory");
            }
            out.push_str(&String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8"));
            out
        }
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = rows
                .into_iter()
                .map(|s| {
                    serde_json::json!({
                        "Split": s.split,
                        "Num Examples": s.num_examples,
                        "Mean LR": round_to(s.mean_lr, 4),
                        "Mean SCR": round_to(s.mean_scr, 4),
                        "Mean Turns": round_to(s.mean_turns, 2),
                        "Mean Total Tokens": round_to(s.mean_total_tokens, 2),
                        "P95 Tokens": round_to(s.p95_tokens, 2),
                    })
                })
                .collect();
            let doc = serde_json::json!({ "meta": meta, "columns": REPORT_COLUMNS, "rows": rows });
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }
    }
}
