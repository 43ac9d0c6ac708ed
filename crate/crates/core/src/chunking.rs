//! Token-budgeted chunking that prefers sentence boundaries.
//!
//! Starting from the current cut, the target position is `target_tokens`
//! further on. Cut candidates are token offsets `k` in
//! `[target - window, min(target + window, hard_cap)]` (relative to the
//! current cut, and never past the end of the text). A cut at `k` falls at the
//! byte end of token `k - 1`, and it is a candidate of tier:
//!
//! 1. sentence: token `k - 1` contains the position right after one of
//!    `. ? ! ؟ ۔` or right after a paragraph break `\n\n`;
//! 2. whitespace: token `k - 1` contains the position right after any
//!    whitespace character.
//!
//! The first non-empty tier wins, choosing the candidate closest to the target
//! and the earlier one on ties. With no candidate at all the text is cut hard
//! at the target. Whatever remains once it is no longer than the target is
//! the final chunk.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::Tokenizer;

pub const SENTENCE_PUNCTUATION: [char; 5] = ['.', '?', '!', '\u{061F}', '\u{06D4}'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryTier {
    SentencePunctuation,
    Whitespace,
    HardSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkPolicy {
    pub target_tokens: usize,
    pub window_tokens: usize,
    pub hard_cap_tokens: usize,
    pub boundary_tiers: Vec<BoundaryTier>,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            target_tokens: 490,
            window_tokens: 50,
            hard_cap_tokens: 506,
            boundary_tiers: vec![
                BoundaryTier::SentencePunctuation,
                BoundaryTier::Whitespace,
                BoundaryTier::HardSplit,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("target_tokens must be positive")]
    ZeroTarget,
    #[error("target_tokens {target} exceeds hard_cap_tokens {cap}")]
    TargetAboveCap { target: usize, cap: usize },
    #[error("window_tokens {window} must be smaller than target_tokens {target}")]
    WindowTooWide { window: usize, target: usize },
    #[error("boundary tiers must be sentence-punctuation, whitespace, hard-split in that order (a prefix ending in hard-split)")]
    BadTiers,
}

impl ChunkPolicy {
    pub fn new(target_tokens: usize, window_tokens: usize, hard_cap_tokens: usize) -> Result<Self, PolicyError> {
        let policy = Self { target_tokens, window_tokens, hard_cap_tokens, ..Self::default() };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.target_tokens == 0 {
            return Err(PolicyError::ZeroTarget);
        }
        if self.target_tokens > self.hard_cap_tokens {
            return Err(PolicyError::TargetAboveCap { target: self.target_tokens, cap: self.hard_cap_tokens });
        }
        if self.window_tokens >= self.target_tokens {
            return Err(PolicyError::WindowTooWide { window: self.window_tokens, target: self.target_tokens });
        }
        // Tiers may drop the softer ones but keep their order and always end hard.
        use BoundaryTier::*;
        let ok = matches!(
            self.boundary_tiers.as_slice(),
            [SentencePunctuation, Whitespace, HardSplit]
                | [SentencePunctuation, HardSplit]
                | [Whitespace, HardSplit]
                | [HardSplit]
        );
        if !ok {
            return Err(PolicyError::BadTiers);
        }
        Ok(())
    }

    fn uses(&self, tier: BoundaryTier) -> bool {
        self.boundary_tiers.contains(&tier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Sentence,
    Whitespace,
    Hard,
    EndOfText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    pub token_count: usize,
    pub boundary_kind: BoundaryKind,
    /// Byte range of the chunk in the source text.
    pub start: usize,
    pub end: usize,
}

/// Byte positions at which a cut would land right after a boundary character.
struct BoundaryMarks {
    sentence: Vec<bool>,
    whitespace: Vec<bool>,
}

impl BoundaryMarks {
    fn scan(text: &str) -> Self {
        let mut sentence = vec![false; text.len() + 1];
        let mut whitespace = vec![false; text.len() + 1];
        let mut prev_newline = false;
        for (i, ch) in text.char_indices() {
            let after = i + ch.len_utf8();
            if SENTENCE_PUNCTUATION.contains(&ch) || (ch == '\n' && prev_newline) {
                sentence[after] = true;
            }
            if ch.is_whitespace() {
                whitespace[after] = true;
            }
            prev_newline = ch == '\n';
        }
        Self { sentence, whitespace }
    }
}

/// Splits `text` into chunks under `policy`. The chunk texts concatenate to
/// `text`; an empty text gives one empty chunk.
///
/// `policy` must be valid (see [`ChunkPolicy::validate`]).
pub fn plan_chunks(text: &str, tokenizer: &Tokenizer, policy: &ChunkPolicy) -> Vec<Chunk> {
    debug_assert!(policy.validate().is_ok(), "invalid chunk policy");
    let spans = tokenizer.tokenize(text);
    let n = spans.len();
    let marks = BoundaryMarks::scan(text);
    let token_has = |marks: &[bool], k: usize| {
        let span = spans[k];
        marks[span.start + 1..=span.end].iter().any(|&m| m)
    };
    let sentence_tier = policy.uses(BoundaryTier::SentencePunctuation);
    let whitespace_tier = policy.uses(BoundaryTier::Whitespace);

    let mut chunks = Vec::new();
    let mut push = |from: usize, to: usize, kind: BoundaryKind| {
        let (start, end) = if from == to { (0, 0) } else { (spans[from].start, spans[to - 1].end) };
        chunks.push(Chunk {
            text: text[start..end].to_owned(),
            token_count: to - from,
            boundary_kind: kind,
            start,
            end,
        });
    };

    let mut cut = 0;
    while n - cut > policy.target_tokens {
        let target = cut + policy.target_tokens;
        let lo = target - policy.window_tokens;
        let hi = (target + policy.window_tokens).min(cut + policy.hard_cap_tokens).min(n);
        let best = |marks: &[bool]| {
            (lo..=hi)
                .filter(|&k| token_has(marks, k - 1))
                .min_by_key(|&k| (k.abs_diff(target), k))
        };
        let (next, kind) = match (sentence_tier.then(|| best(&marks.sentence)).flatten(), whitespace_tier) {
            (Some(k), _) => (k, BoundaryKind::Sentence),
            (None, true) => match best(&marks.whitespace) {
                Some(k) => (k, BoundaryKind::Whitespace),
                None => (target, BoundaryKind::Hard),
            },
            (None, false) => (target, BoundaryKind::Hard),
        };
        push(cut, next, kind);
        cut = next;
    }
    if cut < n || n == 0 {
        push(cut, n, BoundaryKind::EndOfText);
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::testing::byte_level_json;
    use proptest::prelude::*;

    fn builtin() -> Tokenizer {
        Tokenizer::builtin()
    }

    /// `n` builtin tokens ("w " each) with a period token at the given
    /// zero-based token indices.
    fn synthetic(n: usize, periods: &[usize]) -> String {
        (0..n).map(|i| if periods.contains(&i) { ". " } else { "w " }).collect()
    }

    #[test]
    fn policy_validation() {
        assert!(ChunkPolicy::default().validate().is_ok());
        assert_eq!(ChunkPolicy::new(0, 0, 10), Err(PolicyError::ZeroTarget));
        assert!(matches!(ChunkPolicy::new(20, 5, 10), Err(PolicyError::TargetAboveCap { .. })));
        assert!(matches!(ChunkPolicy::new(20, 20, 30), Err(PolicyError::WindowTooWide { .. })));
        let bad = ChunkPolicy { boundary_tiers: vec![BoundaryTier::Whitespace], ..Default::default() };
        assert_eq!(bad.validate(), Err(PolicyError::BadTiers));
    }

    #[test]
    fn short_text_is_one_chunk() {
        let text = synthetic(100, &[]);
        let chunks = plan_chunks(&text, &builtin(), &ChunkPolicy::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::EndOfText);
        assert_eq!(chunks[0].token_count, 100);
    }

    #[test]
    fn empty_text_is_one_empty_chunk() {
        let chunks = plan_chunks("", &builtin(), &ChunkPolicy::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].text.as_str(), chunks[0].token_count), ("", 0));
    }

    #[test]
    fn nearest_sentence_boundary_wins() {
        // Periods are tokens 454 and 479, so the cuts after them sit at
        // offsets 455 and 480; 480 is 10 from the target, 455 is 35.
        let text = synthetic(980, &[454, 479]);
        let chunks = plan_chunks(&text, &builtin(), &ChunkPolicy::default());
        assert_eq!(chunks[0].token_count, 480);
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::Sentence);
        assert!(chunks[0].text.ends_with(". "));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
    }

    #[test]
    fn ties_go_to_the_earlier_boundary() {
        let policy = ChunkPolicy::new(10, 3, 13).unwrap();
        // Cuts after periods at offsets 8 and 12, both 2 away from 10.
        let text = synthetic(30, &[7, 11]);
        let chunks = plan_chunks(&text, &builtin(), &policy);
        assert_eq!(chunks[0].token_count, 8);
    }

    #[test]
    fn whitespace_tier_and_paragraphs() {
        let policy = ChunkPolicy::new(4, 1, 5).unwrap();
        // No punctuation: every token ends in a space, nearest is the target.
        let chunks = plan_chunks("a b c d e f g h i", &builtin(), &policy);
        assert_eq!(chunks[0].token_count, 4);
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::Whitespace);
        // A paragraph break counts as a sentence boundary.
        let chunks = plan_chunks("a b c\n\nd e f g h i", &builtin(), &policy);
        assert_eq!(chunks[0].text, "a b c\n\n");
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::Sentence);
    }

    #[test]
    fn arabic_question_mark_is_sentence_punctuation() {
        let policy = ChunkPolicy::new(4, 2, 6).unwrap();
        let text = "أ ب؟ ج د ه و ز ح";
        let chunks = plan_chunks(text, &builtin(), &policy);
        assert_eq!(chunks[0].text, "أ ب؟ ");
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::Sentence);
    }

    #[test]
    fn hard_splits_at_target_intervals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bytes.json");
        std::fs::write(&path, byte_level_json(&[])).unwrap();
        let per_byte = crate::TokenizerSpec::external("bytes", &path).load().unwrap();
        let text = "a".repeat(1000);
        let chunks = plan_chunks(&text, &per_byte, &ChunkPolicy::default());
        let cuts: Vec<usize> = chunks.iter().map(|c| c.end).collect();
        assert_eq!(cuts, vec![490, 980, 1000]);
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::Hard);
        assert_eq!(chunks[2].boundary_kind, BoundaryKind::EndOfText);
    }

    #[test]
    fn boundary_at_end_of_text_absorbs_the_tail() {
        let policy = ChunkPolicy::new(10, 3, 13).unwrap();
        let text = synthetic(12, &[11]);
        let chunks = plan_chunks(&text, &builtin(), &policy);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].boundary_kind, BoundaryKind::Sentence);
    }

    #[test]
    fn hard_only_policy() {
        let policy = ChunkPolicy {
            boundary_tiers: vec![BoundaryTier::HardSplit],
            ..ChunkPolicy::new(5, 2, 6).unwrap()
        };
        let chunks = plan_chunks(&synthetic(12, &[3]), &builtin(), &policy);
        let counts: Vec<_> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(counts, vec![5, 5, 2]);
    }

    proptest! {
        #[test]
        fn concatenation_and_budget(text in "\\PC{0,300}", target in 2usize..20, window in 0usize..10, extra in 0usize..5) {
            let window = window.min(target - 1);
            let policy = ChunkPolicy::new(target, window, target + extra).unwrap();
            let chunks = plan_chunks(&text, &builtin(), &policy);
            let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
            prop_assert_eq!(joined, text);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert!(c.token_count <= policy.hard_cap_tokens);
                if i + 1 < chunks.len() {
                    prop_assert!(c.token_count >= target - window);
                }
            }
        }
    }
}
