//! The shared queue directory.
//!
//! ```text
//! <dir>/pending/<task_id>.json     task waiting or in progress
//! <dir>/leases/<task_id>.lock      current lease (attempt 0 created here)
//! <dir>/leases/<task_id>.lock.<n>  lease for attempt n >= 1
//! <dir>/done/<task_id>.json        completed results
//! <dir>/failed/<task_id>.json      task that exhausted its attempts
//! ```
//!
//! Every lease file is created with exclusive-create semantics (a fully
//! written temp file hard-linked into place), so readers never see a partial
//! lease and each attempt number is granted at most once. A stale lease with
//! attempt `n` is taken over by creating `<task_id>.lock.<n+1>`; the winner
//! then renames a copy over `<task_id>.lock`. The effective lease of a task
//! is the one with the highest attempt, so a crash between the two steps
//! loses nothing. Done records are also created exclusively, which makes
//! completion exactly-once per task.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tarjama_core::{TranslatedUnit, TranslationUnit, UnitKey};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::trace::{EventKind, Trace, TraceEvent};

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("no units to enqueue")]
    NoUnits,
    #[error("batch size must be positive")]
    InvalidBatchSize,
    #[error("unit {0} appears more than once")]
    DuplicateUnit(UnitKey),
    #[error("task {task_id}: missing results for {}", fmt_keys(.missing))]
    MissingResults { task_id: String, missing: Vec<UnitKey> },
    #[error("task {task_id}: results for units outside the task: {}", fmt_keys(.unexpected))]
    UnexpectedResults { task_id: String, unexpected: Vec<UnitKey> },
}

fn fmt_keys(keys: &[UnitKey]) -> String {
    keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> QueueError + '_ {
    move |source| QueueError::Io { path: path.to_owned(), source }
}

/// A batch of units for one translator. `attempt` is the lease generation
/// under which the task was handed out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub translator_id: String,
    pub units: Vec<TranslationUnit>,
    #[serde(default)]
    pub attempt: u32,
}

impl Task {
    pub fn new(translator_id: impl Into<String>, units: Vec<TranslationUnit>) -> Self {
        let translator_id = translator_id.into();
        let task_id = content_hash(&translator_id, &units);
        Self { task_id, translator_id, units, attempt: 0 }
    }

    pub fn unit_refs(&self) -> Vec<UnitKey> {
        self.units.iter().map(TranslationUnit::key).collect()
    }
}

fn content_hash(translator_id: &str, units: &[TranslationUnit]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(translator_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(units).expect("units serialize"));
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub task_id: String,
    pub worker_id: String,
    pub attempt: u32,
    pub acquired_at_ms: u64,
    pub ttl_ms: u64,
    /// Why the holder gave the lease up, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
    /// Earlier attempts on the same task, oldest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<PriorLease>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorLease {
    pub worker_id: String,
    pub attempt: u32,
    pub acquired_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl Lease {
    pub fn expires_at_ms(&self) -> u64 {
        self.acquired_at_ms.saturating_add(self.ttl_ms)
    }

    pub fn is_expired(&self, now_ms: u64) -> bool {
        now_ms >= self.expires_at_ms()
    }
}

/// A task together with the lease under which the caller holds it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leased {
    pub task: Task,
    pub lease: Lease,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoneRecord {
    pub task_id: String,
    pub translator_id: String,
    pub worker_id: String,
    pub attempt: u32,
    pub completed_at_ms: u64,
    pub units: Vec<TranslatedUnit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRecord {
    pub task: Task,
    pub attempts: u32,
    pub failed_at_ms: u64,
    /// Every lease the task went through, oldest first.
    pub leases: Vec<PriorLease>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Completion {
    Written(DoneRecord),
    /// A done record already existed; these results were dropped.
    Discarded,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QueueStatus {
    /// Pending tasks, including leased ones.
    pub pending: usize,
    /// Pending tasks with an unexpired lease.
    pub leased: usize,
    pub done: usize,
    pub failed: usize,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn temp_path(dir: &Path) -> PathBuf {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    dir.join(format!(".tmp.{}.{n}.{nanos}", std::process::id()))
}

/// Writes `bytes` to `path` via a temp file and rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = temp_path(path.parent().expect("queue paths have a parent"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Creates `path` holding `bytes` only if it does not exist yet. Returns
/// false when another writer got there first.
fn create_exclusive(path: &Path, bytes: &[u8]) -> io::Result<bool> {
    let tmp = temp_path(path.parent().expect("queue paths have a parent"));
    fs::write(&tmp, bytes)?;
    let linked = fs::hard_link(&tmp, path);
    let _ = fs::remove_file(&tmp);
    match linked {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(e),
    }
}

fn remove_if_present(path: &Path) -> io::Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, QueueError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(QueueError::Io { path: path.to_owned(), source }),
    };
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| QueueError::Corrupt { path: path.to_owned(), detail: e.to_string() })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("queue records serialize")
}

pub struct Queue {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    max_attempts: u32,
    trace: Option<Trace>,
}

impl std::fmt::Debug for Queue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Queue")
            .field("root", &self.root)
            .field("max_attempts", &self.max_attempts)
            .field("trace", &self.trace)
            .finish_non_exhaustive()
    }
}

impl Queue {
    /// Opens the queue at `root`, creating its subdirectories if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, QueueError> {
        let root = root.into();
        for sub in ["pending", "leases", "done", "failed"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self {
            root,
            clock: Arc::new(SystemClock),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            trace: None,
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts.max(1);
        self
    }

    pub fn with_trace(mut self, trace: Trace) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn pending_path(&self, id: &str) -> PathBuf {
        self.root.join("pending").join(format!("{id}.json"))
    }

    fn done_path(&self, id: &str) -> PathBuf {
        self.root.join("done").join(format!("{id}.json"))
    }

    fn failed_path(&self, id: &str) -> PathBuf {
        self.root.join("failed").join(format!("{id}.json"))
    }

    fn lease_path(&self, id: &str, attempt: u32) -> PathBuf {
        let name = match attempt {
            0 => format!("{id}.lock"),
            n => format!("{id}.lock.{n}"),
        };
        self.root.join("leases").join(name)
    }

    fn record(&self, event: EventKind, lease: &Lease, at_ms: u64) {
        let Some(trace) = &self.trace else { return };
        let event = TraceEvent {
            event,
            task_id: lease.task_id.clone(),
            worker_id: lease.worker_id.clone(),
            attempt: lease.attempt,
            at_ms,
            expires_at_ms: (event == EventKind::Grant).then(|| lease.expires_at_ms()),
        };
        if let Err(e) = trace.record(&event) {
            warn!("cannot append to trace {}: {e}", trace.path().display());
        }
    }

    /// Splits `units` into batches of `batch_size` in input order and writes
    /// each batch to `pending/`. Batches already pending, done or failed are
    /// left untouched.
    pub fn enqueue(
        &self,
        units: &[TranslationUnit],
        translator_id: &str,
        batch_size: usize,
    ) -> Result<Vec<Task>, QueueError> {
        if units.is_empty() {
            return Err(QueueError::NoUnits);
        }
        if batch_size == 0 {
            return Err(QueueError::InvalidBatchSize);
        }
        let mut seen = BTreeSet::new();
        for u in units {
            if !seen.insert(u.key()) {
                return Err(QueueError::DuplicateUnit(u.key()));
            }
        }
        let tasks: Vec<Task> =
            units.chunks(batch_size).map(|b| Task::new(translator_id, b.to_vec())).collect();
        let mut created = 0;
        for task in &tasks {
            let id = &task.task_id;
            if [self.pending_path(id), self.done_path(id), self.failed_path(id)]
                .iter()
                .any(|p| p.exists())
            {
                continue;
            }
            let path = self.pending_path(id);
            write_atomic(&path, &to_json(task)).map_err(io_err(&path))?;
            created += 1;
        }
        info!("enqueued {created} new of {} tasks for `{translator_id}`", tasks.len());
        Ok(tasks)
    }

    /// Ids of pending tasks, sorted.
    pub fn pending_ids(&self) -> Result<Vec<String>, QueueError> {
        list_ids(&self.root.join("pending"))
    }

    /// The lease with the highest attempt for a task, if any.
    pub fn current_lease(&self, id: &str) -> Result<Option<Lease>, QueueError> {
        let mut current: Option<Lease> = read_json(&self.lease_path(id, 0))?;
        let mut next = current.as_ref().map_or(1, |l| l.attempt + 1);
        while let Some(lease) = read_json::<Lease>(&self.lease_path(id, next))? {
            current = Some(lease);
            next += 1;
        }
        Ok(current)
    }

    /// Tries to lease one pending task. Returns `None` when every pending task
    /// is done, failed or held under an unexpired lease.
    pub fn acquire(&self, worker_id: &str, ttl: Duration) -> Result<Option<Leased>, QueueError> {
        let ids = self.pending_ids()?;
        if ids.is_empty() {
            return Ok(None);
        }
        // Workers start their scan at different offsets to spread contention.
        let offset = worker_id.bytes().fold(0usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize));
        let start = offset % ids.len();
        for id in ids[start..].iter().chain(&ids[..start]) {
            if let Some(leased) = self.try_acquire(id, worker_id, ttl)? {
                return Ok(Some(leased));
            }
        }
        Ok(None)
    }

    fn try_acquire(&self, id: &str, worker_id: &str, ttl: Duration) -> Result<Option<Leased>, QueueError> {
        if self.done_path(id).exists() || self.failed_path(id).exists() {
            return Ok(None);
        }
        let now = self.clock.now_ms();
        let (attempt, history) = match self.current_lease(id)? {
            None => (0, Vec::new()),
            Some(l) if !l.is_expired(now) => return Ok(None),
            Some(l) => {
                let mut history = l.history.clone();
                history.push(PriorLease {
                    worker_id: l.worker_id,
                    attempt: l.attempt,
                    acquired_at_ms: l.acquired_at_ms,
                    last_error: l.last_error,
                });
                (l.attempt + 1, history)
            }
        };
        let lease = Lease {
            task_id: id.to_owned(),
            worker_id: worker_id.to_owned(),
            attempt,
            acquired_at_ms: now,
            ttl_ms: ttl.as_millis() as u64,
            last_error: None,
            history,
        };
        let path = self.lease_path(id, attempt);
        if !create_exclusive(&path, &to_json(&lease)).map_err(io_err(&path))? {
            debug!("{worker_id} lost the race for {id} attempt {attempt}");
            return Ok(None);
        }
        if attempt >= self.max_attempts {
            self.move_to_failed(id, &lease)?;
            return Ok(None);
        }
        if attempt > 0 {
            let lock = self.lease_path(id, 0);
            write_atomic(&lock, &to_json(&lease)).map_err(io_err(&lock))?;
        }
        // The task may have finished between listing and leasing.
        let task: Option<Task> = read_json(&self.pending_path(id))?;
        let Some(mut task) = task.filter(|_| !self.done_path(id).exists()) else {
            self.remove_leases(id)?;
            return Ok(None);
        };
        task.attempt = attempt;
        self.record(EventKind::Grant, &lease, now);
        debug!("{worker_id} leased {id} attempt {attempt}");
        Ok(Some(Leased { task, lease }))
    }

    fn remove_leases(&self, id: &str) -> Result<(), QueueError> {
        let Some(top) = self.current_lease(id)?.map(|l| l.attempt) else {
            return Ok(());
        };
        for attempt in (0..=top).rev() {
            let path = self.lease_path(id, attempt);
            remove_if_present(&path).map_err(io_err(&path))?;
        }
        Ok(())
    }

    fn move_to_failed(&self, id: &str, lease: &Lease) -> Result<(), QueueError> {
        let Some(mut task) = read_json::<Task>(&self.pending_path(id))? else {
            return self.remove_leases(id);
        };
        let now = self.clock.now_ms();
        task.attempt = lease.attempt;
        let record = FailedRecord {
            task,
            attempts: lease.attempt,
            failed_at_ms: now,
            leases: lease.history.clone(),
        };
        let failed = self.failed_path(id);
        write_atomic(&failed, &to_json(&record)).map_err(io_err(&failed))?;
        if self.done_path(id).exists() {
            // A late completion won; keep only the done record.
            remove_if_present(&failed).map_err(io_err(&failed))?;
        } else {
            warn!("task {id} failed after {} attempts", lease.attempt);
            self.record(EventKind::Fail, lease, now);
        }
        let pending = self.pending_path(id);
        remove_if_present(&pending).map_err(io_err(&pending))?;
        self.remove_leases(id)
    }

    /// Writes the done record for a leased task. Every unit of the task must
    /// have a result. If another completion already wrote the record, these
    /// results are discarded with a warning.
    pub fn complete(
        &self,
        leased: &Leased,
        results: &BTreeMap<UnitKey, String>,
    ) -> Result<Completion, QueueError> {
        let task = &leased.task;
        let keys: BTreeSet<UnitKey> = task.units.iter().map(TranslationUnit::key).collect();
        let missing: Vec<UnitKey> = keys.iter().filter(|k| !results.contains_key(k)).cloned().collect();
        if !missing.is_empty() {
            return Err(QueueError::MissingResults { task_id: task.task_id.clone(), missing });
        }
        let unexpected: Vec<UnitKey> = results.keys().filter(|k| !keys.contains(k)).cloned().collect();
        if !unexpected.is_empty() {
            return Err(QueueError::UnexpectedResults { task_id: task.task_id.clone(), unexpected });
        }
        let now = self.clock.now_ms();
        let record = DoneRecord {
            task_id: task.task_id.clone(),
            translator_id: task.translator_id.clone(),
            worker_id: leased.lease.worker_id.clone(),
            attempt: leased.lease.attempt,
            completed_at_ms: now,
            units: task
                .units
                .iter()
                .map(|u| TranslatedUnit {
                    translated_text: results[&u.key()].clone(),
                    translator_id: task.translator_id.clone(),
                    unit: u.clone(),
                })
                .collect(),
        };
        let id = &task.task_id;
        let done = self.done_path(id);
        let written = create_exclusive(&done, &to_json(&record)).map_err(io_err(&done))?;
        let pending = self.pending_path(id);
        remove_if_present(&pending).map_err(io_err(&pending))?;
        let failed = self.failed_path(id);
        remove_if_present(&failed).map_err(io_err(&failed))?;
        self.remove_leases(id)?;
        if written {
            self.record(EventKind::Complete, &leased.lease, now);
            Ok(Completion::Written(record))
        } else {
            warn!(
                "task {id} was already completed; discarding results from {} attempt {}",
                leased.lease.worker_id, leased.lease.attempt
            );
            self.record(EventKind::Discard, &leased.lease, now);
            Ok(Completion::Discarded)
        }
    }

    /// Gives a lease up early, e.g. after a backend failure, so that the next
    /// acquire retries the task with the next attempt number.
    pub fn release(&self, leased: &Leased, error: &str) -> Result<(), QueueError> {
        let now = self.clock.now_ms();
        let mut lease = leased.lease.clone();
        lease.ttl_ms = now.saturating_sub(lease.acquired_at_ms);
        lease.last_error = Some(error.to_owned());
        let id = &lease.task_id;
        // Only rewrite our own generation; a newer one means we were taken over.
        let ours = |l: &Lease| l.attempt == lease.attempt && l.worker_id == lease.worker_id;
        if self.current_lease(id)?.is_some_and(|l| ours(&l)) {
            let own = self.lease_path(id, lease.attempt);
            write_atomic(&own, &to_json(&lease)).map_err(io_err(&own))?;
            if lease.attempt > 0 {
                let lock = self.lease_path(id, 0);
                write_atomic(&lock, &to_json(&lease)).map_err(io_err(&lock))?;
            }
        }
        self.record(EventKind::Release, &leased.lease, now);
        Ok(())
    }

    pub fn status(&self) -> Result<QueueStatus, QueueError> {
        let now = self.clock.now_ms();
        let pending = self.pending_ids()?;
        let mut leased = 0;
        for id in &pending {
            if self.current_lease(id)?.is_some_and(|l| !l.is_expired(now)) {
                leased += 1;
            }
        }
        Ok(QueueStatus {
            pending: pending.len(),
            leased,
            done: list_ids(&self.root.join("done"))?.len(),
            failed: list_ids(&self.root.join("failed"))?.len(),
        })
    }

    pub fn done_records(&self) -> Result<Vec<DoneRecord>, QueueError> {
        self.records("done")
    }

    pub fn failed_records(&self) -> Result<Vec<FailedRecord>, QueueError> {
        self.records("failed")
    }

    fn records<T: for<'de> Deserialize<'de>>(&self, sub: &str) -> Result<Vec<T>, QueueError> {
        let dir = self.root.join(sub);
        let mut out = Vec::new();
        for id in list_ids(&dir)? {
            if let Some(r) = read_json(&dir.join(format!("{id}.json")))? {
                out.push(r);
            }
        }
        Ok(out)
    }
}

fn list_ids(dir: &Path) -> Result<Vec<String>, QueueError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.starts_with('.') {
            continue;
        }
        if let Some(id) = name.strip_suffix(".json") {
            ids.push(id.to_owned());
        }
    }
    ids.sort_unstable();
    Ok(ids)
}
