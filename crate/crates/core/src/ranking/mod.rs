//! Candidate ranking and rank aggregation over metric tables.

mod bt;
mod scorer;

pub use bt::{bt_fit, bt_log_likelihood, bt_prob, BtError, BtFit, BtOptions, PreferenceRecord};
pub use scorer::{CommandScorer, RewardScorer, ScorerError, ScorerRequest, ScorerResponse};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Candidate, Conversation, CorpusError};
use crate::metrics::{score_example, MetricParams, QualityScore};
use crate::tokenize::Tokenizer;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("metric `{0}` is not a column of the table")]
    MissingMetric(String),
    #[error("system `{system}` has no value for metric `{metric}`")]
    MissingValue { system: String, metric: String },
    #[error("system `{system}` has a NaN value for metric `{metric}`")]
    NaN { system: String, metric: String },
    #[error("duplicate system `{0}`")]
    DuplicateSystem(String),
    #[error("no metrics given")]
    NoMetrics,
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("weights must be finite, non-negative and not all zero")]
    InvalidWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub system_id: String,
    pub values: BTreeMap<String, f64>,
}

/// Systems by metric columns. Every row has a value for every column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricTable {
    rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn new(rows: Vec<MetricRow>) -> Result<Self, RankingError> {
        let mut seen = BTreeSet::new();
        for row in &rows {
            if !seen.insert(row.system_id.as_str()) {
                return Err(RankingError::DuplicateSystem(row.system_id.clone()));
            }
        }
        let columns: BTreeSet<&String> = rows.iter().flat_map(|r| r.values.keys()).collect();
        for row in &rows {
            for column in &columns {
                if !row.values.contains_key(*column) {
                    return Err(RankingError::MissingValue {
                        system: row.system_id.clone(),
                        metric: (*column).clone(),
                    });
                }
            }
        }
        Ok(Self { rows })
    }

    /// Builds a table from `(system, [(metric, value)])` pairs.
    pub fn from_pairs<S, M>(rows: impl IntoIterator<Item = (S, Vec<(M, f64)>)>) -> Result<Self, RankingError>
    where
        S: Into<String>,
        M: Into<String>,
    {
        Self::new(
            rows.into_iter()
                .map(|(s, vals)| MetricRow {
                    system_id: s.into(),
                    values: vals.into_iter().map(|(m, v)| (m.into(), v)).collect(),
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn has_metric(&self, metric: &str) -> bool {
        self.rows.first().is_some_and(|r| r.values.contains_key(metric))
    }
}

/// A metric column and its direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub metric: String,
    pub higher_is_better: bool,
}

impl Criterion {
    pub fn higher(metric: impl Into<String>) -> Self {
        Self { metric: metric.into(), higher_is_better: true }
    }

    pub fn lower(metric: impl Into<String>) -> Self {
        Self { metric: metric.into(), higher_is_better: false }
    }
}

/// Fractional ranks of one column: 1 is best, exact ties share the mean of
/// the positions they span.
pub fn column_ranks(
    table: &MetricTable,
    metric: &str,
    higher_is_better: bool,
) -> Result<BTreeMap<String, f64>, RankingError> {
    if !table.has_metric(metric) {
        return Err(RankingError::MissingMetric(metric.to_string()));
    }
    let mut values = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let v = row.values[metric];
        if v.is_nan() {
            return Err(RankingError::NaN { system: row.system_id.clone(), metric: metric.to_string() });
        }
        values.push((row.system_id.as_str(), v));
    }
    values.sort_by(|a, b| {
        let ord = a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal);
        if higher_is_better {
            ord.reverse()
        } else {
            ord
        }
    });
    let mut ranks = BTreeMap::new();
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j].1 == values[i].1 {
            j += 1;
        }
        // Positions i+1 ..= j share their mean.
        let rank = (i + 1 + j) as f64 / 2.0;
        for (system, _) in &values[i..j] {
            ranks.insert(system.to_string(), rank);
        }
        i = j;
    }
    Ok(ranks)
}

/// Mean of the per-column ranks.
pub fn average_rank(
    table: &MetricTable,
    criteria: &[Criterion],
) -> Result<BTreeMap<String, f64>, RankingError> {
    if criteria.is_empty() {
        return Err(RankingError::NoMetrics);
    }
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for c in criteria {
        for (system, rank) in column_ranks(table, &c.metric, c.higher_is_better)? {
            *sums.entry(system).or_default() += rank;
        }
    }
    let n = criteria.len() as f64;
    Ok(sums.into_iter().map(|(s, total)| (s, total / n)).collect())
}

/// Weights of LR, SCR and the reward score in the combined ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub lr: f64,
    pub scr: f64,
    pub rm: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { lr: 1.0, scr: 1.0, rm: 2.0 }
    }
}

impl Weights {
    pub fn new(lr: f64, scr: f64, rm: f64) -> Result<Self, RankingError> {
        let w = Self { lr, scr, rm };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RankingError> {
        let all = [self.lr, self.scr, self.rm];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || all.iter().all(|w| *w == 0.0) {
            return Err(RankingError::InvalidWeights);
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { lr: self.lr * factor, scr: self.scr * factor, rm: self.rm * factor }
    }
}

/// Weighted mean of the available signals.
///
/// Without a reward score its weight is dropped and the rest renormalized;
/// if LR and SCR both have weight 0 they are then weighted equally.
pub fn combine_scores(lr: f64, scr: f64, rm: Option<f64>, weights: &Weights) -> f64 {
    match rm {
        Some(rm) => {
            let total = weights.lr + weights.scr + weights.rm;
            (weights.lr * lr + weights.scr * scr + weights.rm * rm) / total
        }
        None => {
            let total = weights.lr + weights.scr;
            if total == 0.0 {
                (lr + scr) / 2.0
            } else {
                (weights.lr * lr + weights.scr * scr) / total
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub translator_id: String,
    pub lr: f64,
    pub scr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rm: Option<f64>,
    pub combined: f64,
}

/// Candidates of one conversation, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidateSet {
    pub conversation_id: String,
    pub entries: Vec<RankedEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RankedCandidateSet {
    pub fn winner(&self) -> &RankedEntry {
        &self.entries[0]
    }
}

/// Orders already-scored candidates by combined score, then translator id.
pub fn rank_scored(
    conversation_id: &str,
    scored: Vec<(String, QualityScore, Option<f64>)>,
    weights: &Weights,
    warnings: Vec<String>,
) -> Result<RankedCandidateSet, RankingError> {
    if scored.is_empty() {
        return Err(RankingError::NoCandidates);
    }
    let mut entries: Vec<RankedEntry> = scored
        .into_iter()
        .map(|(translator_id, q, rm)| RankedEntry {
            combined: combine_scores(q.lr, q.scr, rm, weights),
            translator_id,
            lr: q.lr,
            scr: q.scr,
            rm,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.combined
            .total_cmp(&a.combined)
            .then_with(|| a.translator_id.cmp(&b.translator_id))
    });
    Ok(RankedCandidateSet { conversation_id: conversation_id.to_string(), entries, warnings })
}

#[derive(Debug, Error)]
pub enum RankCandidatesError {
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Structure(#[from] CorpusError),
}

/// Scores every candidate against `source` and ranks them.
///
/// A failing reward scorer does not fail the ranking: that candidate is
/// ranked on LR and SCR alone and a warning is recorded.
pub fn rank_candidates(
    source: &Conversation,
    candidates: &[Candidate],
    scorer: Option<&dyn RewardScorer>,
    weights: &Weights,
    params: &MetricParams,
    tokenizer: &Tokenizer,
) -> Result<RankedCandidateSet, RankCandidatesError> {
    if candidates.is_empty() {
        return Err(RankingError::NoCandidates.into());
    }
    let mut scored = Vec::with_capacity(candidates.len());
    let mut warnings = Vec::new();
    for candidate in candidates {
        let q = score_example(source, candidate, params, tokenizer)?;
        let rm = match scorer {
            None => None,
            Some(s) => match s.score(source, candidate) {
                Ok(v) => Some(v),
                Err(e) => {
                    let msg = format!(
                        "reward scorer failed for `{}` / `{}`: {e}",
                        source.id, candidate.translator_id
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                    None
                }
            },
        };
        scored.push((candidate.translator_id.clone(), q, rm));
    }
    Ok(rank_scored(&source.id, scored, weights, warnings)?)
}
