//! Append-only event log of lease grants and releases.
//!
//! Every worker appends one JSON line per event with `O_APPEND`, so several
//! processes can share one file. [`verify_trace`] replays the log and reports
//! any instant at which two workers held an unexpired lease on the same task.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Grant,
    Complete,
    Discard,
    Release,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event: EventKind,
    pub task_id: String,
    pub worker_id: String,
    pub attempt: u32,
    pub at_ms: u64,
    /// Lease expiry, for grants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at_ms: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    path: PathBuf,
}

impl Trace {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, event: &TraceEvent) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        // One write call per line keeps concurrent appends from interleaving.
        file.write_all(&line)
    }
}

pub fn read_trace(path: &Path) -> io::Result<Vec<TraceEvent>> {
    let file = std::fs::File::open(path)?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("trace line {}: {e}", i + 1))
        })?;
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceViolation {
    /// The same lease generation was granted twice.
    DuplicateAttempt { task_id: String, attempt: u32 },
    /// A grant started before the previous holder's lease ended.
    Overlap { task_id: String, first: (String, u32), second: (String, u32) },
    /// More than one completion wrote a done record.
    MultipleCompletions { task_id: String, count: usize },
}

/// Checks the no-double-grant and exactly-once-completion properties.
///
/// A lease is held from its grant until the earliest of its expiry and the
/// holder's own complete, discard, release or fail event.
pub fn verify_trace(events: &[TraceEvent]) -> Vec<TraceViolation> {
    let mut by_task: BTreeMap<&str, Vec<&TraceEvent>> = BTreeMap::new();
    for e in events {
        by_task.entry(&e.task_id).or_default().push(e);
    }
    let mut violations = Vec::new();
    for (task_id, events) in by_task {
        let completions = events.iter().filter(|e| e.event == EventKind::Complete).count();
        if completions > 1 {
            violations.push(TraceViolation::MultipleCompletions {
                task_id: task_id.to_owned(),
                count: completions,
            });
        }
        let mut grants: Vec<(u64, u64, &TraceEvent)> = Vec::new();
        for g in events.iter().filter(|e| e.event == EventKind::Grant) {
            if grants.iter().any(|(_, _, h)| h.attempt == g.attempt) {
                violations.push(TraceViolation::DuplicateAttempt {
                    task_id: task_id.to_owned(),
                    attempt: g.attempt,
                });
            }
            let ended = events
                .iter()
                .filter(|e| {
                    e.event != EventKind::Grant
                        && e.worker_id == g.worker_id
                        && e.attempt == g.attempt
                        && e.at_ms >= g.at_ms
                })
                .map(|e| e.at_ms)
                .min();
            let expiry = g.expires_at_ms.unwrap_or(u64::MAX);
            grants.push((g.at_ms, ended.map_or(expiry, |t| t.min(expiry)), g));
        }
        grants.sort_by_key(|(start, _, g)| (*start, g.attempt));
        for pair in grants.windows(2) {
            let (_, end, a) = pair[0];
            let (start, _, b) = pair[1];
            if start < end {
                violations.push(TraceViolation::Overlap {
                    task_id: task_id.to_owned(),
                    first: (a.worker_id.clone(), a.attempt),
                    second: (b.worker_id.clone(), b.attempt),
                });
            }
        }
    }
    violations
}
