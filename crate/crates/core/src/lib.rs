//! Building blocks for curating translated multi-turn SFT corpora.
//!
//! The crate covers the pure parts of the pipeline:
//!
//! - [`corpus`]: conversation types, JSONL ingestion, decomposition into
//!   translation units and deterministic reconstruction.
//! - [`tokenize`]: the builtin offset-preserving tokenizer and the
//!   `tokenizer.json`-backed subword tokenizer.
//! - [`chunking`]: token-budgeted chunking that prefers sentence boundaries.
//! - [`metrics`]: Language Ratio, Script Purity, whitelist stripping and the
//!   CJK contamination check.
//! - [`ranking`]: fractional column ranks, average rank, candidate ranking and
//!   Bradley-Terry fitting.
//! - [`stats`]: per-split aggregation, filtering, stratified sampling and
//!   report rendering.
//!
//! The work queue and translator backends live in `tarjama-queue`.

pub mod chunking;
pub mod corpus;
pub mod metrics;
pub mod ranking;
pub mod stats;
pub mod tokenize;

pub use chunking::{plan_chunks, BoundaryKind, Chunk, ChunkPolicy};
pub use corpus::{
    decompose, parse_corpus, reconstruct, split_parts, Candidate, ChunkPlan, Conversation,
    CorpusError, Message, ParseMode, Part, PartKind, Role, TranslatedUnit, TranslationUnit,
    UnitKey,
};
pub use metrics::{
    classify_char, contains_cjk, language_ratio, score_example, script_purity, strip_whitelisted,
    CharClass, MetricParams, QualityScore,
};
pub use tokenize::{count_tokens, tokenize, TokenSpan, Tokenizer, TokenizerKind, TokenizerSpec};
