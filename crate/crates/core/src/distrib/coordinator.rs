//! Hands out candidates to connected workers and records their fitness.
//!
//! Sockets are served by one reader thread per connection, but every state
//! change happens on the thread running [`Coordinator::run`], in the order
//! events arrive on a single channel.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::protocol::{receive, send, Message, PROTOCOL_VERSION};
use crate::evolve::{Candidate, ConfigError, EvolutionConfig, Proposal, SearchHistory, SearchState};
use crate::fitness::{FitnessRecord, Status};

#[derive(Clone, Debug)]
pub struct CoordinatorOptions {
    /// A task is reassigned when its worker is silent this long.
    pub task_timeout: Duration,
    /// Give up when no worker is connected for this long.
    pub idle_limit: Option<Duration>,
    /// Training fingerprint sent with every task.
    pub spec: Option<String>,
}

impl Default for CoordinatorOptions {
    fn default() -> Self {
        CoordinatorOptions {
            task_timeout: Duration::from_secs(600),
            idle_limit: None,
            spec: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DistribError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("no worker connected for {0:?}")]
    NoWorkers(Duration),
    #[error("{0}")]
    Protocol(String),
}

/// Counters describing how a run went.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub connections: usize,
    pub rejected: usize,
    pub reassigned: usize,
    pub discarded_results: usize,
}

enum Event {
    Connected(u64, TcpStream),
    Received(u64, Message),
    Malformed(u64),
    Closed(u64),
}

struct Conn {
    stream: TcpStream,
    greeted: bool,
}

struct Outstanding {
    proposal: Proposal,
    conn: u64,
    deadline: Instant,
}

/// Budget bookkeeping at one instant; `completed + outstanding + queued +
/// unissued` always equals the budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ledger {
    pub completed: usize,
    pub outstanding: usize,
    pub queued: usize,
    pub unissued: usize,
}

pub struct Coordinator {
    listener: TcpListener,
    state: SearchState,
    opts: CoordinatorOptions,
}

impl Coordinator {
    pub fn bind(
        config: EvolutionConfig,
        addr: impl ToSocketAddrs,
        opts: CoordinatorOptions,
    ) -> Result<Self, DistribError> {
        config.validate()?;
        let listener = TcpListener::bind(addr)?;
        Ok(Coordinator {
            listener,
            state: SearchState::new(config),
            opts,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn run(self) -> Result<SearchHistory, DistribError> {
        self.run_with(|_| {}).map(|(h, _)| h)
    }

    /// Runs until the budget is recorded, calling `on_record` for every
    /// completed candidate.
    pub fn run_with(self, on_record: impl FnMut(&Candidate)) -> Result<(SearchHistory, RunStats), DistribError> {
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = spawn_acceptor(self.listener, tx, stop.clone());
        let mut lp = EventLoop {
            state: self.state,
            opts: self.opts,
            conns: HashMap::new(),
            idle: VecDeque::new(),
            outstanding: BTreeMap::new(),
            queue: VecDeque::new(),
            stats: RunStats::default(),
            last_worker: Instant::now(),
        };
        let result = lp.run(&rx, on_record);
        stop.store(true, Ordering::SeqCst);
        for c in lp.conns.values_mut() {
            let _ = send(&mut c.stream, &Message::Shutdown { reason: None });
            let _ = c.stream.shutdown(Shutdown::Both);
        }
        let _ = acceptor.join();
        result?;
        let stats = lp.stats.clone();
        Ok((lp.state.into_history(), stats))
    }
}

/// Binds, runs to completion and returns the history.
pub fn serve(
    config: EvolutionConfig,
    addr: impl ToSocketAddrs,
    opts: CoordinatorOptions,
) -> Result<SearchHistory, DistribError> {
    Coordinator::bind(config, addr, opts)?.run()
}

fn spawn_acceptor(listener: TcpListener, tx: Sender<Event>, stop: Arc<AtomicBool>) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut next = 0u64;
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    if stream.set_nonblocking(false).is_err() {
                        continue;
                    }
                    let _ = stream.set_nodelay(true);
                    let Ok(read_half) = stream.try_clone() else { continue };
                    let id = next;
                    next += 1;
                    if tx.send(Event::Connected(id, stream)).is_err() {
                        return;
                    }
                    let tx = tx.clone();
                    thread::spawn(move || read_loop(id, read_half, tx));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
                Err(_) => thread::sleep(Duration::from_millis(10)),
            }
        }
    })
}

fn read_loop(id: u64, stream: TcpStream, tx: Sender<Event>) {
    let mut r = BufReader::new(stream);
    loop {
        let ev = match receive(&mut r) {
            Ok(Some(m)) => Event::Received(id, m),
            Ok(None) => Event::Closed(id),
            Err(e) if e.kind() == io::ErrorKind::InvalidData => Event::Malformed(id),
            Err(_) => Event::Closed(id),
        };
        let last = !matches!(ev, Event::Received(..));
        if tx.send(ev).is_err() || last {
            return;
        }
    }
}

struct EventLoop {
    state: SearchState,
    opts: CoordinatorOptions,
    conns: HashMap<u64, Conn>,
    idle: VecDeque<u64>,
    outstanding: BTreeMap<u64, Outstanding>,
    queue: VecDeque<Proposal>,
    stats: RunStats,
    last_worker: Instant,
}

impl EventLoop {
    fn ledger(&self) -> Ledger {
        let budget = self.state.config().budget;
        Ledger {
            completed: self.state.completed(),
            outstanding: self.outstanding.len(),
            queued: self.queue.len(),
            unissued: budget - self.state.issued() as usize,
        }
    }

    fn check_ledger(&self) {
        let l = self.ledger();
        assert_eq!(
            l.completed + l.outstanding + l.queued + l.unissued,
            self.state.config().budget,
            "{l:?}"
        );
    }

    fn run(&mut self, rx: &Receiver<Event>, mut on_record: impl FnMut(&Candidate)) -> Result<(), DistribError> {
        let tick = (self.opts.task_timeout / 4).clamp(Duration::from_millis(5), Duration::from_millis(250));
        while !self.state.is_done() {
            match rx.recv_timeout(tick) {
                Ok(ev) => self.handle(ev, &mut on_record),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(DistribError::Protocol("listener stopped".into()));
                }
            }
            self.expire();
            self.assign();
            self.check_ledger();
            if self.conns.is_empty() {
                if let Some(limit) = self.opts.idle_limit {
                    if self.last_worker.elapsed() > limit {
                        return Err(DistribError::NoWorkers(limit));
                    }
                }
            } else {
                self.last_worker = Instant::now();
            }
        }
        Ok(())
    }

    fn handle(&mut self, ev: Event, on_record: &mut impl FnMut(&Candidate)) {
        match ev {
            Event::Connected(id, stream) => {
                self.stats.connections += 1;
                self.conns.insert(id, Conn { stream, greeted: false });
            }
            Event::Received(id, msg) => self.message(id, msg, on_record),
            Event::Malformed(id) => self.drop_conn(id),
            Event::Closed(id) => self.drop_conn(id),
        }
    }

    fn message(&mut self, id: u64, msg: Message, on_record: &mut impl FnMut(&Candidate)) {
        let Some(conn) = self.conns.get_mut(&id) else { return };
        match msg {
            Message::Hello { protocol_version, .. } if !conn.greeted => {
                if protocol_version != PROTOCOL_VERSION {
                    let reason =
                        format!("protocol version {protocol_version:?} not supported, expected {PROTOCOL_VERSION:?}");
                    let _ = send(&mut conn.stream, &Message::Shutdown { reason: Some(reason) });
                    self.stats.rejected += 1;
                    self.drop_conn(id);
                } else {
                    conn.greeted = true;
                    self.idle.push_back(id);
                }
            }
            Message::Heartbeat { task_id: Some(t) } if conn.greeted => {
                if let Some(o) = self.outstanding.get_mut(&t) {
                    if o.conn == id {
                        o.deadline = Instant::now() + self.opts.task_timeout;
                    }
                }
            }
            Message::Heartbeat { task_id: None } if conn.greeted => {}
            Message::Result {
                task_id,
                fitness,
                status,
                runtime_seconds,
            } if conn.greeted => {
                let current = self.outstanding.get(&task_id).is_some_and(|o| o.conn == id);
                if current {
                    let o = self.outstanding.remove(&task_id).expect("checked above");
                    let record = match status {
                        Status::Ok => FitnessRecord::ok(fitness, runtime_seconds),
                        Status::Unstable => FitnessRecord::unstable(runtime_seconds),
                    };
                    on_record(self.state.record(o.proposal, record));
                } else {
                    self.stats.discarded_results += 1;
                }
                if !self.idle.contains(&id) {
                    self.idle.push_back(id);
                }
            }
            _ => self.drop_conn(id),
        }
    }

    fn drop_conn(&mut self, id: u64) {
        if let Some(c) = self.conns.remove(&id) {
            let _ = c.stream.shutdown(Shutdown::Both);
        }
        self.idle.retain(|&c| c != id);
        let lost: Vec<u64> = self
            .outstanding
            .iter()
            .filter(|(_, o)| o.conn == id)
            .map(|(&t, _)| t)
            .collect();
        for t in lost {
            let o = self.outstanding.remove(&t).expect("listed above");
            self.queue.push_back(o.proposal);
            self.stats.reassigned += 1;
        }
    }

    fn expire(&mut self) {
        let now = Instant::now();
        let late: Vec<u64> = self
            .outstanding
            .iter()
            .filter(|(_, o)| o.deadline <= now)
            .map(|(&t, _)| t)
            .collect();
        for t in late {
            let o = self.outstanding.remove(&t).expect("listed above");
            self.queue.push_back(o.proposal);
            self.stats.reassigned += 1;
        }
    }

    fn assign(&mut self) {
        while !self.state.is_done() {
            let have_work = !self.queue.is_empty() || (self.state.issued() as usize) < self.state.config().budget;
            if !have_work {
                return;
            }
            let Some(id) = self.idle.pop_front() else { return };
            let proposal = match self.queue.pop_front() {
                Some(p) => p,
                None => self.state.propose(),
            };
            let msg = Message::Task {
                task_id: proposal.index,
                expr: proposal.graph.to_text(),
                k: proposal.graph.param_count(),
                spec: self.opts.spec.clone(),
                seed: proposal.eval_seed,
            };
            let conn = self.conns.get_mut(&id).expect("idle connections are live");
            let sent = send(&mut conn.stream, &msg).is_ok();
            self.outstanding.insert(
                proposal.index,
                Outstanding {
                    proposal,
                    conn: id,
                    deadline: Instant::now() + self.opts.task_timeout,
                },
            );
            if !sent {
                self.drop_conn(id);
            }
        }
    }
}
