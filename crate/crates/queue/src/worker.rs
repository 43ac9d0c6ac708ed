use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use log::{info, warn};
use tarjama_core::UnitKey;

use crate::backend::Translator;
use crate::store::{Completion, Queue, QueueError, DEFAULT_TTL};

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub worker_id: String,
    pub ttl: Duration,
    /// Sleep between acquire attempts while other workers hold every task.
    pub poll: Duration,
    /// Stop after this many leases.
    pub max_tasks: Option<usize>,
    /// Keep polling while leased tasks remain; otherwise exit as soon as
    /// nothing can be acquired.
    pub wait: bool,
}

impl WorkerOptions {
    pub fn new(worker_id: impl Into<String>) -> Self {
        Self {
            worker_id: worker_id.into(),
            ttl: DEFAULT_TTL,
            poll: Duration::from_millis(200),
            max_tasks: None,
            wait: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerReport {
    /// Tasks whose done record this worker wrote.
    pub completed: usize,
    /// Completions dropped because another worker finished first.
    pub discarded: usize,
    /// Leases given up after a backend error.
    pub released: usize,
}

impl WorkerReport {
    pub fn processed(&self) -> usize {
        self.completed + self.discarded
    }
}

/// Acquires, translates and completes tasks until the queue is drained.
///
/// Each task goes to the translator whose id matches the task's translator
/// id. A backend error, or a task for an unknown translator, gives the lease up so the task is retried under the next
/// attempt; tasks that run out of attempts end up in `failed/`.
pub fn worker_loop(
    queue: &Queue,
    translators: &[&dyn Translator],
    options: &WorkerOptions,
) -> Result<WorkerReport, QueueError> {
    let mut report = WorkerReport::default();
    let mut leases = 0;
    loop {
        if options.max_tasks.is_some_and(|m| leases >= m) {
            break;
        }
        let Some(leased) = queue.acquire(&options.worker_id, options.ttl)? else {
            if !options.wait || queue.pending_ids()?.is_empty() {
                break;
            }
            thread::sleep(options.poll);
            continue;
        };
        leases += 1;
        let mut results = BTreeMap::<UnitKey, String>::new();
        let mut failure = None;
        let translator = translators.iter().find(|t| t.id() == leased.task.translator_id);
        let Some(translator) = translator else {
            let error = format!("no backend configured for translator `{}`", leased.task.translator_id);
            warn!("{}: {error}", options.worker_id);
            queue.release(&leased, &error)?;
            report.released += 1;
            continue;
        };
        for unit in &leased.task.units {
            match translator.translate(unit) {
                Ok(text) => {
                    results.insert(unit.key(), text);
                }
                Err(e) => {
                    failure = Some(format!("{}: {e}", unit.key()));
                    break;
                }
            }
        }
        if let Some(error) = failure {
            warn!("{}: task {} failed: {error}", options.worker_id, leased.task.task_id);
            queue.release(&leased, &error)?;
            report.released += 1;
            continue;
        }
        match queue.complete(&leased, &results)? {
            Completion::Written(_) => report.completed += 1,
            Completion::Discarded => report.discarded += 1,
        }
    }
    info!(
        "{}: completed {}, discarded {}, released {}",
        options.worker_id, report.completed, report.discarded, report.released
    );
    Ok(report)
}
