//! Offset-preserving tokenizers used for chunk budgeting and token statistics.
//!
//! Two kinds exist. The builtin tokenizer needs no files and its rule is
//! frozen:
//!
//! > A token is a maximal run of letters (general category `L`, with any
//! > combining marks `M` inside the run), a maximal run of decimal digits
//! > (`Nd`), or any other single non-whitespace codepoint, together with all
//! > whitespace that follows it. Whitespace at the very start of a text is a
//! > token of its own.
//!
//! So `"a b"` is two tokens, `"a "` and `"b"`. The external kind loads a
//! standard `tokenizer.json` and reports the model's token boundaries.
//!
//! Either way the spans returned by [`Tokenizer::tokenize`] are sorted,
//! contiguous, start at 0 and end at `text.len()`, and every boundary is a
//! `char` boundary.

use std::fmt;
use std::path::PathBuf;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerKind {
    BuiltinRegex,
    ExternalVocab,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub name: String,
    pub kind: TokenizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_path: Option<PathBuf>,
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TokenizerSpec {
    pub fn builtin() -> Self {
        Self { name: "builtin".into(), kind: TokenizerKind::BuiltinRegex, vocab_path: None }
    }

    pub fn external(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self { name: name.into(), kind: TokenizerKind::ExternalVocab, vocab_path: Some(path.into()) }
    }

    pub fn load(&self) -> Result<Tokenizer, TokenizerError> {
        match self.kind {
            TokenizerKind::BuiltinRegex => Ok(Tokenizer::Builtin { name: self.name.clone() }),
            TokenizerKind::ExternalVocab => {
                let path = self
                    .vocab_path
                    .as_ref()
                    .ok_or_else(|| TokenizerError::MissingVocab(self.name.clone()))?;
                let inner = tokenizers::Tokenizer::from_file(path).map_err(|e| {
                    TokenizerError::InvalidVocab { path: path.clone(), message: e.to_string() }
                })?;
                Ok(Tokenizer::from_tokenizers(self.name.clone(), inner))
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("tokenizer `{0}` is external but has no vocab_path")]
    MissingVocab(String),
    #[error("cannot load tokenizer definition {}: {message}", .path.display())]
    InvalidVocab { path: PathBuf, message: String },
}

/// Half-open byte range `[start, end)` of one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

/// A loaded tokenizer. Immutable after load and shareable across threads.
#[derive(Clone)]
pub enum Tokenizer {
    Builtin { name: String },
    External { name: String, inner: Box<tokenizers::Tokenizer> },
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tokenizer::Builtin { name } => f.debug_struct("Builtin").field("name", name).finish(),
            Tokenizer::External { name, .. } => {
                f.debug_struct("External").field("name", name).finish_non_exhaustive()
            }
        }
    }
}

fn builtin_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s+|(?:[\p{L}\p{M}]+|\p{Nd}+|[^\s\p{L}\p{M}\p{Nd}])\s*")
            .expect("builtin tokenizer pattern")
    })
}

impl Tokenizer {
    pub fn builtin() -> Self {
        Tokenizer::Builtin { name: "builtin".into() }
    }

    pub fn from_tokenizers(name: impl Into<String>, inner: tokenizers::Tokenizer) -> Self {
        Tokenizer::External { name: name.into(), inner: Box::new(inner) }
    }

    pub fn name(&self) -> &str {
        match self {
            Tokenizer::Builtin { name } | Tokenizer::External { name, .. } => name,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenSpan> {
        match self {
            Tokenizer::Builtin { .. } => builtin_regex()
                .find_iter(text)
                .map(|m| TokenSpan { start: m.start(), end: m.end() })
                .collect(),
            Tokenizer::External { inner, .. } => external_spans(inner, text),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            Tokenizer::Builtin { .. } => builtin_regex().find_iter(text).count(),
            Tokenizer::External { .. } => self.tokenize(text).len(),
        }
    }
}

/// Turns model offsets into contiguous char-aligned spans. A token whose end
/// falls inside a character, or does not advance past the previous token, is
/// folded into its neighbour; gaps (e.g. stripped whitespace) are absorbed by
/// the preceding span.
fn external_spans(tokenizer: &tokenizers::Tokenizer, text: &str) -> Vec<TokenSpan> {
    if text.is_empty() {
        return Vec::new();
    }
    let ends: Vec<usize> = match tokenizer.encode(text, false) {
        Ok(encoding) => encoding.get_offsets().iter().map(|&(_, end)| end).collect(),
        Err(e) => {
            log::warn!("external tokenizer failed, treating text as one token: {e}");
            Vec::new()
        }
    };
    let mut spans = Vec::with_capacity(ends.len());
    let mut start = 0;
    for end in ends {
        let mut end = end.min(text.len());
        while !text.is_char_boundary(end) {
            end += 1;
        }
        if end > start {
            spans.push(TokenSpan { start, end });
            start = end;
        }
    }
    match spans.last_mut() {
        Some(last) => last.end = text.len(),
        None => spans.push(TokenSpan { start: 0, end: text.len() }),
    }
    spans
}

pub fn tokenize(text: &str, spec: &TokenizerSpec) -> Result<Vec<TokenSpan>, TokenizerError> {
    Ok(spec.load()?.tokenize(text))
}

pub fn count_tokens(text: &str, spec: &TokenizerSpec) -> Result<usize, TokenizerError> {
    Ok(spec.load()?.count(text))
}
