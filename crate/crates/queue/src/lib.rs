//! Multi-process translation work queue over a shared directory.
//!
//! Workers coordinate only through atomic filesystem operations: tasks are
//! written with write-then-rename, leases and done records with exclusive
//! creation. See [`store`] for the directory layout and lease protocol and
//! [`backend`] for the translator clients.

pub mod backend;
pub mod clock;
pub mod scorer;
pub mod store;
pub mod trace;
pub mod worker;

pub use backend::{
    translate_chunk, Backend, BackendConfig, BackendError, BackendKind, Backoff, ChatClient, Translator,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use scorer::HttpScorer;
pub use store::{
    Completion, DoneRecord, FailedRecord, Lease, Leased, PriorLease, Queue, QueueError, QueueStatus, Task,
    DEFAULT_MAX_ATTEMPTS, DEFAULT_TTL,
};
pub use trace::{read_trace, verify_trace, EventKind, Trace, TraceEvent, TraceViolation};
pub use worker::{worker_loop, WorkerOptions, WorkerReport};
