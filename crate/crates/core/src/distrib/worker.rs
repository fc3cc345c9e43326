//! Pulls tasks from a coordinator, evaluates them and reports back.

use std::io::{self, BufReader};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use super::protocol::{receive, send, Message, PROTOCOL_VERSION};
use crate::fitness::{evaluate_contained, Evaluator, FitnessRecord};
use crate::graph::ActivationGraph;

#[derive(Clone, Debug)]
pub struct WorkerOptions {
    pub worker_id: String,
    pub heartbeat_interval: Duration,
    /// Reconnection attempts after a failed connect or a lost coordinator.
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt up to 16 times.
    pub backoff: Duration,
    /// Expected training fingerprint; tasks carrying another one are
    /// refused.
    pub spec: Option<String>,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        WorkerOptions {
            worker_id: format!("worker-{}", std::process::id()),
            heartbeat_interval: Duration::from_secs(5),
            max_retries: 5,
            backoff: Duration::from_millis(200),
            spec: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The coordinator sent `shutdown`.
    Shutdown,
    /// The coordinator went away and did not come back.
    Disconnected,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerReport {
    pub tasks: usize,
    pub heartbeats: usize,
    pub reason: StopReason,
}

#[derive(Debug, thiserror::Error)]
pub enum WorkerError {
    #[error("could not reach coordinator: {0}")]
    Connect(io::Error),
    #[error("coordinator refused this worker: {0}")]
    Rejected(String),
    #[error("task {task_id} wants training setup {got}, this worker has {want}")]
    SpecMismatch { task_id: u64, got: String, want: String },
}

enum Session {
    Shutdown,
    Lost,
}

/// Serves tasks until the coordinator shuts down or stays unreachable for
/// `max_retries` attempts.
pub fn work(
    addr: impl ToSocketAddrs + Clone,
    eval: &dyn Evaluator,
    opts: &WorkerOptions,
) -> Result<WorkerReport, WorkerError> {
    let mut report = WorkerReport {
        tasks: 0,
        heartbeats: 0,
        reason: StopReason::Disconnected,
    };
    let mut ever_connected = false;
    let mut attempt = 0u32;
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(stream) => {
                ever_connected = true;
                attempt = 0;
                if let Session::Shutdown = session(stream, eval, opts, &mut report)? {
                    report.reason = StopReason::Shutdown;
                    return Ok(report);
                }
            }
            Err(e) if !ever_connected && attempt >= opts.max_retries => return Err(WorkerError::Connect(e)),
            Err(_) => {}
        }
        if attempt >= opts.max_retries {
            return Ok(report);
        }
        attempt += 1;
        thread::sleep(opts.backoff * 2u32.pow((attempt - 1).min(16)));
    }
}

fn session(
    stream: TcpStream,
    eval: &dyn Evaluator,
    opts: &WorkerOptions,
    report: &mut WorkerReport,
) -> Result<Session, WorkerError> {
    let _ = stream.set_nodelay(true);
    let Ok(read_half) = stream.try_clone() else {
        return Ok(Session::Lost);
    };
    let mut reader = BufReader::new(read_half);
    let mut w = stream;
    let hello = Message::Hello {
        worker_id: opts.worker_id.clone(),
        protocol_version: PROTOCOL_VERSION.to_string(),
    };
    if send(&mut w, &hello).is_err() {
        return Ok(Session::Lost);
    }
    loop {
        let msg = match receive(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) | Err(_) => return Ok(Session::Lost),
        };
        match msg {
            Message::Task {
                task_id,
                expr,
                spec,
                seed,
                ..
            } => {
                if let (Some(got), Some(want)) = (&spec, &opts.spec) {
                    if got != want {
                        return Err(WorkerError::SpecMismatch {
                            task_id,
                            got: got.clone(),
                            want: want.clone(),
                        });
                    }
                }
                let Some(record) = run_task(&mut w, task_id, &expr, seed, eval, opts, report) else {
                    return Ok(Session::Lost);
                };
                let result = Message::Result {
                    task_id,
                    fitness: record.fitness,
                    status: record.status,
                    runtime_seconds: record.runtime_seconds,
                };
                if send(&mut w, &result).is_err() {
                    return Ok(Session::Lost);
                }
                report.tasks += 1;
            }
            Message::Shutdown { reason: Some(r) } => return Err(WorkerError::Rejected(r)),
            Message::Shutdown { .. } => return Ok(Session::Shutdown),
            _ => {}
        }
    }
}

/// Evaluates on a helper thread while sending heartbeats. `None` when the
/// coordinator can no longer be written to.
fn run_task(
    w: &mut TcpStream,
    task_id: u64,
    expr: &str,
    seed: u64,
    eval: &dyn Evaluator,
    opts: &WorkerOptions,
    report: &mut WorkerReport,
) -> Option<FitnessRecord> {
    let Ok(graph) = ActivationGraph::parse(expr) else {
        return Some(FitnessRecord::unstable(0.0));
    };
    thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        let graph = &graph;
        let h = s.spawn(move || {
            let _ = tx.send(evaluate_contained(eval, graph, seed));
        });
        loop {
            match rx.recv_timeout(opts.heartbeat_interval) {
                Ok(r) => return Some(r),
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    if send(w, &Message::Heartbeat { task_id: Some(task_id) }).is_err() {
                        // wait for the evaluation, then drop its result
                        let _ = h.join();
                        return None;
                    }
                    report.heartbeats += 1;
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    // the evaluator panicked
                    let _ = h.join();
                    return Some(FitnessRecord::unstable(0.0).sanitized());
                }
            }
        }
    })
}
