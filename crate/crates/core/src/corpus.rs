//! Conversations, translation units, and the JSONL files that carry them.
//!
//! A conversation is decomposed into [`TranslationUnit`]s: one per chunk of
//! one part of one message. Parts are the `<think>` spans and the visible text
//! around them. Every unit carries enough metadata to put the conversation
//! back together, so [`reconstruct`] is order-independent and exact.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{plan_chunks, ChunkPolicy};
use crate::tokenize::Tokenizer;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    /// Position within the conversation. Not part of the wire format; it is
    /// assigned from the list position on ingestion.
    #[serde(skip)]
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ConversationWire")]
pub struct Conversation {
    pub id: String,
    pub split: String,
    pub messages: Vec<Message>,
    /// Stratification label (e.g. `code`, `science`, `math`), when the corpus has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Deserialized form; message indices are assigned on conversion.
#[derive(Deserialize)]
struct ConversationWire {
    id: String,
    split: String,
    messages: Vec<Message>,
    #[serde(default)]
    category: Option<String>,
}

impl From<ConversationWire> for Conversation {
    fn from(w: ConversationWire) -> Self {
        let mut c = Self { id: w.id, split: w.split, messages: w.messages, category: w.category };
        c.reindex();
        c
    }
}

impl Conversation {
    pub fn new(id: impl Into<String>, split: impl Into<String>, messages: Vec<(Role, String)>) -> Self {
        let messages = messages
            .into_iter()
            .enumerate()
            .map(|(index, (role, content))| Message { role, content, index })
            .collect();
        Self { id: id.into(), split: split.into(), messages, category: None }
    }

    /// Resets every message index to its list position.
    pub fn reindex(&mut self) {
        for (i, m) in self.messages.iter_mut().enumerate() {
            m.index = i;
        }
    }

    /// Checks the structural invariants: at least one message, contiguous
    /// indices, and well-formed `<think>` markup in every message.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.messages.is_empty() {
            return Err(CorpusError::EmptyConversation { conversation_id: self.id.clone() });
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.index != i {
                return Err(CorpusError::Structure {
                    conversation_id: self.id.clone(),
                    detail: format!("message at position {i} carries index {}", m.index),
                });
            }
            split_parts(&m.content).map_err(|source| CorpusError::Markup {
                conversation_id: self.id.clone(),
                message_index: i,
                source,
            })?;
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("conversation serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Think,
    Visible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub kind: PartKind,
    pub text: String,
}

impl Part {
    pub fn think(text: impl Into<String>) -> Self {
        Self { kind: PartKind::Think, text: text.into() }
    }

    pub fn visible(text: impl Into<String>) -> Self {
        Self { kind: PartKind::Visible, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("`{THINK_CLOSE}` at byte {offset} has no matching `{THINK_OPEN}`")]
    StrayClose { offset: usize },
    #[error("`{THINK_OPEN}` at byte {offset} is never closed")]
    Unterminated { offset: usize },
    #[error("nested `{THINK_OPEN}` at byte {offset}")]
    Nested { offset: usize },
}

/// Splits message content into visible text and `<think>` spans.
///
/// Empty visible stretches between markers are dropped; an empty message
/// yields a single empty visible part. [`join_parts`] inverts this exactly.
pub fn split_parts(content: &str) -> Result<Vec<Part>, MarkupError> {
    let mut parts = Vec::new();
    let mut pos = 0;
    while pos < content.len() {
        let rest = &content[pos..];
        let open = rest.find(THINK_OPEN);
        let close = rest.find(THINK_CLOSE);
        match (open, close) {
            (None, None) => {
                parts.push(Part::visible(rest));
                break;
            }
            (_, Some(c)) if open.is_none_or(|o| c < o) => {
                return Err(MarkupError::StrayClose { offset: pos + c });
            }
            (Some(o), _) => {
                if o > 0 {
                    parts.push(Part::visible(&rest[..o]));
                }
                let inner_start = pos + o + THINK_OPEN.len();
                let inner = &content[inner_start..];
                let close = inner
                    .find(THINK_CLOSE)
                    .ok_or(MarkupError::Unterminated { offset: pos + o })?;
                if let Some(nested) = inner[..close].find(THINK_OPEN) {
                    return Err(MarkupError::Nested { offset: inner_start + nested });
                }
                parts.push(Part::think(&inner[..close]));
                pos = inner_start + close + THINK_CLOSE.len();
            }
            (None, Some(_)) => unreachable!("guarded above"),
        }
    }
    if parts.is_empty() {
        parts.push(Part::visible(""));
    }
    Ok(parts)
}

/// Re-wraps think parts in their markers and concatenates.
pub fn join_parts<'a>(parts: impl IntoIterator<Item = (PartKind, &'a str)>) -> String {
    let mut out = String::new();
    for (kind, text) in parts {
        match kind {
            PartKind::Think => {
                out.push_str(THINK_OPEN);
                out.push_str(text);
                out.push_str(THINK_CLOSE);
            }
            PartKind::Visible => out.push_str(text),
        }
    }
    out
}

/// Message content with `<think>` markers removed, parts joined as-is.
pub fn strip_think_markers(content: &str) -> String {
    match split_parts(content) {
        Ok(parts) => parts.into_iter().map(|p| p.text).collect(),
        Err(_) => content.to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitKey {
    pub conversation_id: String,
    pub message_index: usize,
    pub part_index: usize,
    pub chunk_index: usize,
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}#{}.{}.{}",
            self.conversation_id, self.message_index, self.part_index, self.chunk_index
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub conversation_id: String,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub message_index: usize,
    /// Messages in the conversation.
    pub message_count: usize,
    pub role: Role,
    pub part_type: PartKind,
    pub part_index: usize,
    /// Parts in this message.
    pub part_count: usize,
    pub chunk_index: usize,
    pub chunk_count: usize,
    pub source_text: String,
}

impl TranslationUnit {
    pub fn key(&self) -> UnitKey {
        UnitKey {
            conversation_id: self.conversation_id.clone(),
            message_index: self.message_index,
            part_index: self.part_index,
            chunk_index: self.chunk_index,
        }
    }

    /// Wraps the unit with its own source text as the translation.
    pub fn identity(self, translator_id: impl Into<String>) -> TranslatedUnit {
        TranslatedUnit {
            translated_text: self.source_text.clone(),
            translator_id: translator_id.into(),
            unit: self,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedUnit {
    #[serde(flatten)]
    pub unit: TranslationUnit,
    pub translator_id: String,
    pub translated_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub conversation_id: String,
    pub translator_id: String,
    pub conversation: Conversation,
}

impl Candidate {
    /// Reassembles a candidate from one translator's units of one conversation.
    pub fn from_units(units: &[TranslatedUnit]) -> Result<Self, CorpusError> {
        let conversation = reconstruct(units)?;
        let translator_id = units[0].translator_id.clone();
        if let Some(other) = units.iter().find(|u| u.translator_id != translator_id) {
            return Err(CorpusError::Structure {
                conversation_id: conversation.id,
                detail: format!(
                    "units from translators `{translator_id}` and `{}` mixed",
                    other.translator_id
                ),
            });
        }
        Ok(Self { conversation_id: conversation.id.clone(), translator_id, conversation })
    }

    /// Checks that the translated conversation has the same message count,
    /// roles, indices and part structure as `source`.
    pub fn validate_against(&self, source: &Conversation) -> Result<(), CorpusError> {
        let mismatch = |detail: String| CorpusError::Structure {
            conversation_id: source.id.clone(),
            detail,
        };
        if self.conversation_id != source.id {
            return Err(mismatch(format!("candidate is for `{}`", self.conversation_id)));
        }
        let (src, dst) = (&source.messages, &self.conversation.messages);
        if src.len() != dst.len() {
            return Err(mismatch(format!("{} messages vs {} in source", dst.len(), src.len())));
        }
        for (s, d) in src.iter().zip(dst) {
            if s.role != d.role || s.index != d.index {
                return Err(mismatch(format!(
                    "message {}: {} at index {} vs {} at index {}",
                    s.index, d.role, d.index, s.role, s.index
                )));
            }
            let kinds = |c: &str| -> Result<Vec<PartKind>, CorpusError> {
                split_parts(c)
                    .map(|ps| ps.into_iter().map(|p| p.kind).collect())
                    .map_err(|err| CorpusError::Markup {
                        conversation_id: source.id.clone(),
                        message_index: s.index,
                        source: err,
                    })
            };
            if kinds(&s.content)? != kinds(&d.content)? {
                return Err(mismatch(format!("message {}: part structure differs", s.index)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Any bad line aborts parsing.
    #[default]
    Strict,
    /// Bad lines are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub error: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.error)
    }
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub conversations: Vec<Conversation>,
    /// Lines dropped in lenient mode.
    pub skipped: Vec<LineError>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid conversation: {message}")]
    Validation { line: usize, message: String },
    #[error("duplicate conversation id `{id}` on lines {first_line} and {line}")]
    DuplicateId { id: String, first_line: usize, line: usize },
    #[error("conversation `{conversation_id}` has no messages")]
    EmptyConversation { conversation_id: String },
    #[error("conversation `{conversation_id}`, message {message_index}: {source}")]
    Markup {
        conversation_id: String,
        message_index: usize,
        #[source]
        source: MarkupError,
    },
    #[error("conversation `{conversation_id}`: {detail}")]
    Structure { conversation_id: String, detail: String },
    #[error("chunk plan for `{conversation_id}` has no entry for message {message_index}, part {part_index}")]
    MissingPlanPart { conversation_id: String, message_index: usize, part_index: usize },
    #[error("chunk plan for `{conversation_id}` message {message_index}, part {part_index} does not concatenate to the part text")]
    PlanMismatch { conversation_id: String, message_index: usize, part_index: usize },
    #[error("conversation `{conversation_id}` is missing units {}", fmt_missing(.missing))]
    IncompleteUnits { conversation_id: String, missing: Vec<(usize, usize, usize)> },
    #[error("conversation `{conversation_id}` message {message_index}, part {part_index}: conflicting chunk counts {first} and {second}")]
    ChunkCountConflict {
        conversation_id: String,
        message_index: usize,
        part_index: usize,
        first: usize,
        second: usize,
    },
    #[error("duplicate unit {0}")]
    DuplicateUnit(UnitKey),
    #[error("no units to reconstruct")]
    NoUnits,
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

fn fmt_missing(missing: &[(usize, usize, usize)]) -> String {
    missing
        .iter()
        .map(|(m, p, c)| format!("(message {m}, part {p}, chunk {c})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Parses a JSONL corpus, one conversation per line.
///
/// Blank lines are ignored. Message indices are assigned from list order.
/// In lenient mode malformed lines and later duplicates of an id are skipped
/// and listed in [`ParsedCorpus::skipped`].
pub fn parse_corpus<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParsedCorpus, CorpusError> {
    let mut out = ParsedCorpus::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Conversation>(&line)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })
            .and_then(|mut c| {
                c.reindex();
                c.validate()
                    .map_err(|e| CorpusError::Validation { line: line_no, message: e.to_string() })?;
                Ok(c)
            })
            .and_then(|c| match seen.get(&c.id) {
                Some(&first_line) => {
                    Err(CorpusError::DuplicateId { id: c.id.clone(), first_line, line: line_no })
                }
                None => Ok(c),
            });
        match parsed {
            Ok(c) => {
                seen.insert(c.id.clone(), line_no);
                out.conversations.push(c);
            }
            Err(e) if mode == ParseMode::Lenient => {
                log::warn!("skipping corpus line {line_no}: {e}");
                out.skipped.push(LineError { line: line_no, error: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Reads any JSONL file of serde records; blank lines are ignored.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Record { line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T, W, I>(mut writer: W, records: I) -> std::io::Result<()>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Chunk texts for every (message_index, part_index) of a conversation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChunkPlan {
    chunks: BTreeMap<(usize, usize), Vec<String>>,
}

impl ChunkPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, message_index: usize, part_index: usize, chunks: Vec<String>) {
        self.chunks.insert((message_index, part_index), chunks);
    }

    pub fn get(&self, message_index: usize, part_index: usize) -> Option<&[String]> {
        self.chunks.get(&(message_index, part_index)).map(Vec::as_slice)
    }

    /// One chunk per part.
    pub fn whole_parts(conversation: &Conversation) -> Result<Self, CorpusError> {
        Self::build(conversation, |text| vec![text.to_owned()])
    }

    /// Chunks every part with [`plan_chunks`].
    pub fn with_chunker(
        conversation: &Conversation,
        tokenizer: &Tokenizer,
        policy: &ChunkPolicy,
    ) -> Result<Self, CorpusError> {
        Self::build(conversation, |text| {
            plan_chunks(text, tokenizer, policy).into_iter().map(|c| c.text).collect()
        })
    }

    fn build(
        conversation: &Conversation,
        mut chunker: impl FnMut(&str) -> Vec<String>,
    ) -> Result<Self, CorpusError> {
        let mut plan = Self::new();
        for m in &conversation.messages {
            for (p, part) in message_parts(conversation, m)?.iter().enumerate() {
                plan.insert(m.index, p, chunker(&part.text));
            }
        }
        Ok(plan)
    }
}

fn message_parts(conversation: &Conversation, m: &Message) -> Result<Vec<Part>, CorpusError> {
    split_parts(&m.content).map_err(|source| CorpusError::Markup {
        conversation_id: conversation.id.clone(),
        message_index: m.index,
        source,
    })
}

/// Emits one unit per planned chunk, in (message, part, chunk) order.
pub fn decompose(
    conversation: &Conversation,
    plan: &ChunkPlan,
) -> Result<Vec<TranslationUnit>, CorpusError> {
    let mut units = Vec::new();
    for m in &conversation.messages {
        let parts = message_parts(conversation, m)?;
        let part_count = parts.len();
        for (p, part) in parts.into_iter().enumerate() {
            let chunks = plan.get(m.index, p).ok_or_else(|| CorpusError::MissingPlanPart {
                conversation_id: conversation.id.clone(),
                message_index: m.index,
                part_index: p,
            })?;
            if chunks.is_empty() || chunks.concat() != part.text {
                return Err(CorpusError::PlanMismatch {
                    conversation_id: conversation.id.clone(),
                    message_index: m.index,
                    part_index: p,
                });
            }
            for (c, text) in chunks.iter().enumerate() {
                units.push(TranslationUnit {
                    conversation_id: conversation.id.clone(),
                    split: conversation.split.clone(),
                    category: conversation.category.clone(),
                    message_index: m.index,
                    message_count: conversation.messages.len(),
                    role: m.role,
                    part_type: part.kind,
                    part_index: p,
                    part_count,
                    chunk_index: c,
                    chunk_count: chunks.len(),
                    source_text: text.clone(),
                });
            }
        }
    }
    Ok(units)
}

struct PartSlot<'a> {
    kind: PartKind,
    chunk_count: usize,
    chunks: BTreeMap<usize, &'a str>,
}

/// Rebuilds a conversation from its translated units, in any order.
pub fn reconstruct(units: &[TranslatedUnit]) -> Result<Conversation, CorpusError> {
    let first = &units.first().ok_or(CorpusError::NoUnits)?.unit;
    let conversation_id = first.conversation_id.clone();
    let structure = |detail: String| CorpusError::Structure {
        conversation_id: conversation_id.clone(),
        detail,
    };

    let mut roles: BTreeMap<usize, Role> = BTreeMap::new();
    let mut part_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut slots: BTreeMap<(usize, usize), PartSlot<'_>> = BTreeMap::new();
    for tu in units {
        let u = &tu.unit;
        if u.conversation_id != conversation_id {
            return Err(structure(format!("unit from conversation `{}` mixed in", u.conversation_id)));
        }
        if u.split != first.split || u.category != first.category {
            return Err(structure(format!("unit {} disagrees on split or category", u.key())));
        }
        if u.message_count != first.message_count {
            return Err(structure(format!(
                "unit {} says {} messages, another says {}",
                u.key(),
                u.message_count,
                first.message_count
            )));
        }
        if u.message_index >= u.message_count || u.part_index >= u.part_count {
            return Err(structure(format!(
                "unit {} lies outside {} messages / {} parts",
                u.key(),
                u.message_count,
                u.part_count
            )));
        }
        if *part_counts.entry(u.message_index).or_insert(u.part_count) != u.part_count {
            return Err(structure(format!(
                "message {} has units with different part counts",
                u.message_index
            )));
        }
        if u.chunk_index >= u.chunk_count {
            return Err(structure(format!(
                "unit {} has chunk_index {} >= chunk_count {}",
                u.key(),
                u.chunk_index,
                u.chunk_count
            )));
        }
        let role = *roles.entry(u.message_index).or_insert(u.role);
        if role != u.role {
            return Err(structure(format!(
                "message {} has units with roles {role} and {}",
                u.message_index, u.role
            )));
        }
        let slot = slots.entry((u.message_index, u.part_index)).or_insert_with(|| PartSlot {
            kind: u.part_type,
            chunk_count: u.chunk_count,
            chunks: BTreeMap::new(),
        });
        if slot.chunk_count != u.chunk_count {
            return Err(CorpusError::ChunkCountConflict {
                conversation_id: conversation_id.clone(),
                message_index: u.message_index,
                part_index: u.part_index,
                first: slot.chunk_count,
                second: u.chunk_count,
            });
        }
        if slot.kind != u.part_type {
            return Err(structure(format!(
                "message {}, part {} has units of both kinds",
                u.message_index, u.part_index
            )));
        }
        if slot.chunks.insert(u.chunk_index, tu.translated_text.as_str()).is_some() {
            return Err(CorpusError::DuplicateUnit(u.key()));
        }
    }

    let mut missing = Vec::new();
    for m in 0..first.message_count {
        let Some(&part_count) = part_counts.get(&m) else {
            missing.push((m, 0, 0));
            continue;
        };
        for p in 0..part_count {
            match slots.get(&(m, p)) {
                None => missing.push((m, p, 0)),
                Some(slot) => missing.extend(
                    (0..slot.chunk_count)
                        .filter(|c| !slot.chunks.contains_key(c))
                        .map(|c| (m, p, c)),
                ),
            }
        }
    }
    if !missing.is_empty() {
        return Err(CorpusError::IncompleteUnits { conversation_id, missing });
    }

    let mut messages = Vec::with_capacity(roles.len());
    for (&index, &role) in &roles {
        let mut content = String::new();
        for (_, slot) in slots.range((index, 0)..=(index, usize::MAX)) {
            let text: String = slot.chunks.values().copied().collect();
            content.push_str(&join_parts([(slot.kind, text.as_str())]));
        }
        messages.push(Message { role, content, index });
    }
    Ok(Conversation {
        id: conversation_id,
        split: first.split.clone(),
        messages,
        category: first.category.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(id: &str, msgs: &[(Role, &str)]) -> Conversation {
        Conversation::new(id, "train", msgs.iter().map(|(r, c)| (*r, c.to_string())).collect())
    }

    #[test]
    fn deserialized_messages_are_indexed() {
        let c = conv("a", &[(Role::User, "q"), (Role::Assistant, "r"), (Role::User, "s")]);
        let back: Conversation = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.messages.iter().map(|m| m.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    fn identity(units: Vec<TranslationUnit>) -> Vec<TranslatedUnit> {
        units.into_iter().map(|u| u.identity("id")).collect()
    }

    #[test]
    fn parses_minimal_line() {
        let line = r#"{"id":"a","split":"s","messages":[{"role":"user","content":"hi"},{"role":"assistant","content":"yo"}]}"#;
        let parsed = parse_corpus(line.as_bytes(), ParseMode::Strict).unwrap();
        assert_eq!(parsed.conversations.len(), 1);
        let c = &parsed.conversations[0];
        assert_eq!(c.messages.len(), 2);
        assert_eq!(c.messages[1].index, 1);
        assert_eq!(c.messages[1].role, Role::Assistant);
        assert_eq!(c.to_json_line(), line);
    }

    #[test]
    fn duplicate_id_cites_both_lines() {
        let mut lines = Vec::new();
        for i in 1..=8 {
            let id = if i == 3 || i == 7 { "dup".to_string() } else { format!("c{i}") };
            lines.push(format!(
                r#"{{"id":"{id}","split":"s","messages":[{{"role":"user","content":"x"}}]}}"#
            ));
        }
        let err = parse_corpus(lines.join("\n").as_bytes(), ParseMode::Strict).unwrap_err();
        match err {
            CorpusError::DuplicateId { id, first_line, line } => {
                assert_eq!((id.as_str(), first_line, line), ("dup", 3, 7));
            }
            other => panic!("unexpected {other}"),
        }
        let lenient = parse_corpus(lines.join("\n").as_bytes(), ParseMode::Lenient).unwrap();
        assert_eq!(lenient.conversations.len(), 7);
        assert_eq!(lenient.skipped[0].line, 7);
    }

    #[test]
    fn line_scoped_errors() {
        let input = "{\"id\":\"a\",\"split\":\"s\",\"messages\":[{\"role\":\"user\",\"content\":\"x\"}]}\n\
                     {\"id\":\"b\",\"messages\":[]}\n\
                     {\"id\":\"c\",\"split\":\"s\",\"messages\":[]}\n";
        match parse_corpus(input.as_bytes(), ParseMode::Strict).unwrap_err() {
            CorpusError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("split"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        let lenient = parse_corpus(input.as_bytes(), ParseMode::Lenient).unwrap();
        assert_eq!(lenient.conversations.len(), 1);
        let lines: Vec<_> = lenient.skipped.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert!(lenient.skipped[1].error.contains("no messages"));
    }

    #[test]
    fn rejects_lone_surrogate_and_bad_markup() {
        let lone = r#"{"id":"a","split":"s","messages":[{"role":"user","content":"\ud800"}]}"#;
        assert!(matches!(
            parse_corpus(lone.as_bytes(), ParseMode::Strict),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        let bad = r#"{"id":"a","split":"s","messages":[{"role":"assistant","content":"<think>x"}]}"#;
        let err = parse_corpus(bad.as_bytes(), ParseMode::Strict).unwrap_err();
        assert!(err.to_string().contains("message 0"), "{err}");
    }

    #[test]
    fn split_parts_examples() {
        assert_eq!(split_parts("hello").unwrap(), vec![Part::visible("hello")]);
        assert_eq!(
            split_parts("<think>A</think>B").unwrap(),
            vec![Part::think("A"), Part::visible("B")]
        );
        let parts = split_parts("X<think>Y</think>").unwrap();
        assert_eq!(parts, vec![Part::visible("X"), Part::think("Y")]);
        assert_eq!(join_parts(parts.iter().map(|p| (p.kind, p.text.as_str()))), "X<think>Y</think>");
        assert_eq!(split_parts("").unwrap(), vec![Part::visible("")]);
        assert_eq!(split_parts("<think></think>").unwrap(), vec![Part::think("")]);
    }

    #[test]
    fn split_parts_errors() {
        assert_eq!(split_parts("a</think>"), Err(MarkupError::StrayClose { offset: 1 }));
        assert_eq!(split_parts("<think>a"), Err(MarkupError::Unterminated { offset: 0 }));
        assert_eq!(
            split_parts("<think>a<think>b</think></think>"),
            Err(MarkupError::Nested { offset: 8 })
        );
    }

    #[test]
    fn decompose_examples() {
        let c = conv("c", &[(Role::User, "q"), (Role::Assistant, "a")]);
        let units = decompose(&c, &ChunkPlan::whole_parts(&c).unwrap()).unwrap();
        assert_eq!(units.len(), 2);
        assert!(units.iter().all(|u| u.chunk_count == 1));

        let c = conv("c", &[(Role::Assistant, "<think>T</think>R")]);
        let units = decompose(&c, &ChunkPlan::whole_parts(&c).unwrap()).unwrap();
        let kinds: Vec<_> = units.iter().map(|u| (u.part_type, u.part_index)).collect();
        assert_eq!(kinds, vec![(PartKind::Think, 0), (PartKind::Visible, 1)]);

        let c = conv("c", &[(Role::User, "abc")]);
        let mut plan = ChunkPlan::new();
        plan.insert(0, 0, vec!["a".into(), "b".into(), "c".into()]);
        let units = decompose(&c, &plan).unwrap();
        let idx: Vec<_> = units.iter().map(|u| (u.chunk_index, u.chunk_count)).collect();
        assert_eq!(idx, vec![(0, 3), (1, 3), (2, 3)]);
    }

    #[test]
    fn decompose_plan_errors() {
        let c = conv("c", &[(Role::User, "abc"), (Role::Assistant, "d")]);
        let mut plan = ChunkPlan::new();
        plan.insert(0, 0, vec!["abc".into()]);
        assert!(matches!(
            decompose(&c, &plan),
            Err(CorpusError::MissingPlanPart { message_index: 1, part_index: 0, .. })
        ));
        plan.insert(1, 0, vec!["x".into()]);
        assert!(matches!(decompose(&c, &plan), Err(CorpusError::PlanMismatch { .. })));
    }

    #[test]
    fn reconstruct_roundtrip_and_shuffle() {
        let c = conv(
            "c",
            &[
                (Role::System, "sys"),
                (Role::User, "question?"),
                (Role::Assistant, "<think>step one. step two.</think>answer"),
            ],
        );
        let mut plan = ChunkPlan::whole_parts(&c).unwrap();
        plan.insert(2, 0, vec!["step ".into(), "one. ".into(), "step two.".into()]);
        let units = identity(decompose(&c, &plan).unwrap());
        assert_eq!(reconstruct(&units).unwrap(), c);
        let mut rev = units.clone();
        rev.reverse();
        rev.swap(0, 2);
        assert_eq!(reconstruct(&rev).unwrap(), c);
    }

    #[test]
    fn reconstruct_reports_missing_chunk() {
        let c = conv("c", &[(Role::User, "abc")]);
        let mut plan = ChunkPlan::new();
        plan.insert(0, 0, vec!["a".into(), "b".into(), "c".into()]);
        let mut units = identity(decompose(&c, &plan).unwrap());
        units.remove(1);
        match reconstruct(&units).unwrap_err() {
            CorpusError::IncompleteUnits { missing, .. } => assert_eq!(missing, vec![(0, 0, 1)]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reconstruct_reports_conflicts() {
        let c = conv("c", &[(Role::User, "ab")]);
        let mut plan = ChunkPlan::new();
        plan.insert(0, 0, vec!["a".into(), "b".into()]);
        let mut units = identity(decompose(&c, &plan).unwrap());
        units[1].unit.chunk_count = 3;
        units[1].unit.chunk_index = 1;
        assert!(matches!(reconstruct(&units), Err(CorpusError::ChunkCountConflict { .. })));
        assert!(matches!(reconstruct(&[]), Err(CorpusError::NoUnits)));
    }

    #[test]
    fn structure_validator() {
        let src = conv("c", &[(Role::User, "q"), (Role::Assistant, "<think>t</think>a")]);
        let mut cand = Candidate {
            conversation_id: "c".into(),
            translator_id: "t".into(),
            conversation: src.clone(),
        };
        cand.validate_against(&src).unwrap();
        cand.conversation.messages[1].content = "a".into();
        assert!(matches!(cand.validate_against(&src), Err(CorpusError::Structure { .. })));
        cand.conversation.messages.pop();
        assert!(cand.validate_against(&src).is_err());
    }

    #[test]
    fn units_file_roundtrip() {
        let c = conv("c", &[(Role::Tool, "{\"x\": 1}")]);
        let units = identity(decompose(&c, &ChunkPlan::whole_parts(&c).unwrap()).unwrap());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &units).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"part_type\":\"visible\""));
        assert!(text.contains("\"translated_text\""));
        let back: Vec<TranslatedUnit> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, units);
    }
}
