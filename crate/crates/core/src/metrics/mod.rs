//! Intrinsic quality signals for translated text.
//!
//! Language Ratio (LR) penalizes length drift between source and target in
//! whitespace and non-whitespace character counts. Script Purity (SCR) is
//! the share of Arabic-script letters and digits after whitelisted spans are
//! removed, saturating at `tau`.

mod script;
mod whitelist;

pub use script::{
    classify_char, is_combining_mark, unicode_version_string, CharClass, ScriptTally,
    UNICODE_VERSION,
};
pub use whitelist::strip_whitelisted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{strip_think_markers, Candidate, Conversation, CorpusError};
use crate::tokenize::Tokenizer;

pub const DEFAULT_ALPHA: f64 = 1.25;
pub const DEFAULT_TAU: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("alpha must lie in [1.0, 1.5], got {0}")]
    Alpha(f64),
    #[error("tau must lie in (0, 1], got {0}")]
    Tau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub alpha: f64,
    pub tau: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, tau: DEFAULT_TAU }
    }
}

impl MetricParams {
    pub fn new(alpha: f64, tau: f64) -> Result<Self, MetricError> {
        let params = Self { alpha, tau };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(1.0..=1.5).contains(&self.alpha) {
            return Err(MetricError::Alpha(self.alpha));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(MetricError::Tau(self.tau));
        }
        Ok(())
    }
}

/// Whitespace and non-whitespace scalar counts of a text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthCounts {
    pub whitespace: usize,
    pub chars: usize,
}

impl LengthCounts {
    pub fn of(text: &str) -> Self {
        let mut counts = Self::default();
        for ch in text.chars() {
            if ch.is_whitespace() {
                counts.whitespace += 1;
            } else {
                counts.chars += 1;
            }
        }
        counts
    }
}

/// `exp(-alpha * |ln(y / x)|)`, with 1 for `0/0` and 0 when only one side is 0.
pub fn ratio_factor(x: usize, y: usize, alpha: f64) -> f64 {
    match (x, y) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => (-alpha * (y as f64 / x as f64).ln().abs()).exp(),
    }
}

pub fn lr_from_counts(source: LengthCounts, target: LengthCounts, alpha: f64) -> f64 {
    let w = ratio_factor(source.whitespace, target.whitespace, alpha);
    let c = ratio_factor(source.chars, target.chars, alpha);
    w.min(c)
}

pub fn language_ratio(source: &str, target: &str, alpha: f64) -> f64 {
    lr_from_counts(LengthCounts::of(source), LengthCounts::of(target), alpha)
}

pub fn scr_from_tally(tally: &ScriptTally, tau: f64) -> f64 {
    (tally.arabic_ratio() / tau).min(1.0)
}

pub fn script_purity(target: &str, tau: f64) -> f64 {
    scr_from_tally(&ScriptTally::of(&strip_whitelisted(target)), tau)
}

/// True when any scalar lies in a CJK Unified or Compatibility Ideographs block.
pub fn contains_cjk(text: &str) -> bool {
    text.chars().any(is_cjk_ideograph)
}

fn is_cjk_ideograph(ch: char) -> bool {
    matches!(
        ch as u32,
        0x3400..=0x4DBF
            | 0x4E00..=0x9FFF
            | 0xF900..=0xFAFF
            | 0x20000..=0x2A6DF
            | 0x2A700..=0x2B73F
            | 0x2B740..=0x2B81F
            | 0x2B820..=0x2CEAF
            | 0x2CEB0..=0x2EBEF
            | 0x2EBF0..=0x2EE5F
            | 0x2F800..=0x2FA1F
            | 0x30000..=0x3134F
            | 0x31350..=0x323AF
            | 0x323B0..=0x3347F
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub lr: f64,
    pub scr: f64,
    pub tokens: usize,
    pub turns: usize,
}

/// One line of a scored-candidates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub conversation_id: String,
    pub translator_id: String,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub lr: f64,
    pub scr: f64,
    pub tokens: usize,
    pub turns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cjk: Option<bool>,
}

impl ScoredExample {
    pub fn new(source: &Conversation, candidate: &Candidate, score: QualityScore) -> Self {
        Self {
            conversation_id: candidate.conversation_id.clone(),
            translator_id: candidate.translator_id.clone(),
            split: source.split.clone(),
            category: source.category.clone(),
            lr: score.lr,
            scr: score.scr,
            tokens: score.tokens,
            turns: score.turns,
            cjk: Some(candidate.conversation.messages.iter().any(|m| contains_cjk(&m.content))),
        }
    }

    pub fn quality(&self) -> QualityScore {
        QualityScore { lr: self.lr, scr: self.scr, tokens: self.tokens, turns: self.turns }
    }
}

/// Message contents without think markers, joined by newlines.
pub fn flatten_content(conversation: &Conversation) -> String {
    conversation
        .messages
        .iter()
        .map(|m| strip_think_markers(&m.content))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Scores one candidate against its source conversation.
///
/// LR and SCR see the whole conversation as one text. Tokens are counted per
/// message on the raw translated content and summed.
pub fn score_example(
    source: &Conversation,
    candidate: &Candidate,
    params: &MetricParams,
    tokenizer: &Tokenizer,
) -> Result<QualityScore, CorpusError> {
    candidate.validate_against(source)?;
    let src = flatten_content(source);
    let tgt = flatten_content(&candidate.conversation);
    let tokens = candidate
        .conversation
        .messages
        .iter()
        .map(|m| tokenizer.count(&m.content))
        .sum();
    Ok(QualityScore {
        lr: language_ratio(&src, &tgt, params.alpha),
        scr: script_purity(&tgt, params.tau),
        tokens,
        turns: candidate.conversation.messages.len(),
    })
}
