//! Asynchronous evaluation: a coordinator owns the search state and hands
//! candidates to any number of workers over TCP.

mod coordinator;
mod protocol;
mod worker;

pub use coordinator::{serve, Coordinator, CoordinatorOptions, DistribError, Ledger, RunStats};
pub use protocol::{receive, send, spec_fingerprint, Message, PROTOCOL_VERSION};
pub use worker::{work, StopReason, WorkerError, WorkerOptions, WorkerReport};
