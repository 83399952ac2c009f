//! Deterministic discrete-event core.
//!
//! Events are dispatched in `(fire_time, seq)` order where `seq` is a global
//! counter assigned at scheduling time, so a `(seed, config)` pair fully
//! determines a run. Time is integer nanoseconds.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Nanos, ReplicaId};

/// Per-packet header on the PCIe link.
pub const PCIE_HEADER_BYTES: usize = 32;
/// Default PCIe round trip between NIC and host.
pub const DEFAULT_PCIE_RTT_NS: Nanos = 500;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(Endpoint),
    #[error("no {kind:?} link between {from} and {to}")]
    NoLink {
        kind: LinkKind,
        from: Endpoint,
        to: Endpoint,
    },
    #[error("timer delay must be positive")]
    ZeroDelay,
    #[error("crash time {at} is in the past (now {now})")]
    CrashInPast { at: Nanos, now: Nanos },
    #[error("event cap of {0} exceeded (livelock?)")]
    EventCapExceeded(u64),
}

/// Addressable simulation participant. Every replica is a SmartNIC plus the
/// host interface behind it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Replica(ReplicaId),
    Host(ReplicaId),
}

impl Endpoint {
    pub fn replica(self) -> ReplicaId {
        match self {
            Endpoint::Replica(r) | Endpoint::Host(r) => r,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Replica(r) => write!(f, "nic:{r}"),
            Endpoint::Host(r) => write!(f, "host:{r}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Network,
    Pcie,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkModel {
    pub kind: LinkKind,
    /// Base one-way latency.
    pub one_way_latency: Nanos,
    /// Extra latency drawn uniformly from `0..=jitter` per message.
    pub jitter: Nanos,
    pub header_bytes: usize,
    /// Deliver in send order per directed pair even when jitter would reorder.
    pub fifo: bool,
}

impl LinkModel {
    /// Replica-to-replica link. Reliable and in order per pair, like an RDMA
    /// reliable connection.
    pub fn network(one_way_latency: Nanos, jitter: Nanos, header_bytes: usize) -> Self {
        LinkModel {
            kind: LinkKind::Network,
            one_way_latency,
            jitter,
            header_bytes,
            fifo: true,
        }
    }

    /// NIC-host link with the given round trip, split evenly per direction.
    pub fn pcie(round_trip: Nanos) -> Self {
        LinkModel {
            kind: LinkKind::Pcie,
            one_way_latency: round_trip.div_ceil(2),
            jitter: 0,
            header_bytes: PCIE_HEADER_BYTES,
            fifo: true,
        }
    }

    pub fn round_trip(&self) -> Nanos {
        2 * self.one_way_latency
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replicas: usize,
    pub seed: u64,
    pub network: LinkModel,
    pub pcie: LinkModel,
    /// Added to the departure time of everything a handler sends.
    pub processing_delay: Nanos,
    pub event_cap: u64,
}

impl SimConfig {
    pub fn new(replicas: usize, seed: u64) -> Self {
        SimConfig {
            replicas,
            seed,
            network: LinkModel::network(2_000, 0, 0),
            pcie: LinkModel::pcie(DEFAULT_PCIE_RTT_NS),
            processing_delay: 0,
            event_cap: 200_000_000,
        }
    }
}

/// Coarse bucket a dispatched handler invocation is accounted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Protocol,
    Network,
    Rest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub protocol: u64,
    pub network: u64,
    pub rest: u64,
}

impl CategoryCounts {
    pub fn add(&mut self, c: Category) {
        match c {
            Category::Protocol => self.protocol += 1,
            Category::Network => self.network += 1,
            Category::Rest => self.rest += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.protocol + self.network + self.rest
    }

    pub fn merge(&mut self, other: &CategoryCounts) {
        self.protocol += other.protocol;
        self.network += other.network;
        self.rest += other.rest;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Payload plus per-packet headers.
    pub bytes: u64,
    pub payload_bytes: u64,
}

impl LinkCounters {
    pub fn merge(&mut self, other: &LinkCounters) {
        self.sent += other.sent;
        self.delivered += other.delivered;
        self.dropped += other.dropped;
        self.bytes += other.bytes;
        self.payload_bytes += other.payload_bytes;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimerId(u64);

#[derive(Debug)]
pub enum Payload<M, T> {
    Message {
        kind: LinkKind,
        from: Endpoint,
        msg: M,
    },
    /// Externally injected input (client requests).
    Inject(M),
    Timer {
        id: TimerId,
        token: T,
    },
    Crash,
}

#[derive(Debug)]
pub struct SimEvent<M, T> {
    pub fire_time: Nanos,
    pub seq: u64,
    pub target: Endpoint,
    pub payload: Payload<M, T>,
}

impl<M, T> PartialEq for SimEvent<M, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_time, self.seq) == (other.fire_time, other.seq)
    }
}

impl<M, T> Eq for SimEvent<M, T> {}

impl<M, T> PartialOrd for SimEvent<M, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M, T> Ord for SimEvent<M, T> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_time, self.seq).cmp(&(other.fire_time, other.seq))
    }
}

/// Callbacks invoked by [`SimNet::run`].
pub trait Handler<M, T> {
    type Error: From<SimError>;

    fn on_message(
        &mut self,
        net: &mut SimNet<M, T>,
        kind: LinkKind,
        from: Endpoint,
        to: Endpoint,
        msg: M,
    ) -> Result<Category, Self::Error>;

    fn on_inject(&mut self, net: &mut SimNet<M, T>, to: Endpoint, msg: M) -> Result<Category, Self::Error>;

    fn on_timer(&mut self, net: &mut SimNet<M, T>, target: Endpoint, token: T) -> Result<Category, Self::Error>;

    fn on_crash(&mut self, net: &mut SimNet<M, T>, replica: ReplicaId) -> Result<(), Self::Error>;

    /// Called when the queue drains. Returning `true` means new events were
    /// scheduled and the run continues.
    fn on_quiescent(&mut self, _net: &mut SimNet<M, T>) -> Result<bool, Self::Error> {
        Ok(false)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub final_time: Nanos,
    pub events_dispatched: u64,
    pub buckets: CategoryCounts,
    pub network: LinkCounters,
    pub pcie: LinkCounters,
    pub timers_set: u64,
    pub timers_fired: u64,
    pub timers_cancelled: u64,
    pub injects_dropped: u64,
    pub crashed: Vec<ReplicaId>,
    pub pending_events: u64,
}

#[derive(Debug)]
pub struct SimNet<M, T> {
    cfg: SimConfig,
    now: Nanos,
    next_seq: u64,
    queue: BinaryHeap<Reverse<SimEvent<M, T>>>,
    rng: ChaCha8Rng,
    last_delivery: HashMap<(LinkKind, Endpoint, Endpoint), Nanos>,
    crashed: BTreeSet<ReplicaId>,
    live_timers: HashSet<TimerId>,
    next_timer: u64,
    network: LinkCounters,
    pcie: LinkCounters,
    per_replica: Vec<[LinkCounters; 2]>,
    per_replica_buckets: Vec<CategoryCounts>,
    buckets: CategoryCounts,
    dispatched: u64,
    timers_set: u64,
    timers_fired: u64,
    timers_cancelled: u64,
    injects_dropped: u64,
}

impl<M, T> SimNet<M, T> {
    pub fn new(cfg: SimConfig) -> Self {
        let n = cfg.replicas;
        SimNet {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            last_delivery: HashMap::new(),
            crashed: BTreeSet::new(),
            live_timers: HashSet::new(),
            next_timer: 0,
            network: LinkCounters::default(),
            pcie: LinkCounters::default(),
            per_replica: vec![[LinkCounters::default(); 2]; n],
            per_replica_buckets: vec![CategoryCounts::default(); n],
            buckets: CategoryCounts::default(),
            dispatched: 0,
            timers_set: 0,
            timers_fired: 0,
            timers_cancelled: 0,
            injects_dropped: 0,
        }
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn is_crashed(&self, r: ReplicaId) -> bool {
        self.crashed.contains(&r)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn link(&self, kind: LinkKind) -> &LinkModel {
        match kind {
            LinkKind::Network => &self.cfg.network,
            LinkKind::Pcie => &self.cfg.pcie,
        }
    }

    pub fn counters(&self, kind: LinkKind) -> &LinkCounters {
        match kind {
            LinkKind::Network => &self.network,
            LinkKind::Pcie => &self.pcie,
        }
    }

    /// Counters attributed to one replica: network traffic it sent, and all
    /// PCIe traffic on its NIC-host link.
    pub fn replica_counters(&self, r: ReplicaId, kind: LinkKind) -> &LinkCounters {
        &self.per_replica[r.index()][kind as usize]
    }

    pub fn replica_buckets(&self, r: ReplicaId) -> &CategoryCounts {
        &self.per_replica_buckets[r.index()]
    }

    fn check_endpoint(&self, e: Endpoint) -> Result<(), SimError> {
        if e.replica().index() < self.cfg.replicas {
            Ok(())
        } else {
            Err(SimError::UnknownEndpoint(e))
        }
    }

    fn push(&mut self, fire_time: Nanos, target: Endpoint, payload: Payload<M, T>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(SimEvent {
            fire_time,
            seq,
            target,
            payload,
        }));
    }

    /// Schedules delivery of `msg` over the `kind` link. `payload_bytes`
    /// excludes the link header, which is added here.
    pub fn send(
        &mut self,
        kind: LinkKind,
        from: Endpoint,
        to: Endpoint,
        msg: M,
        payload_bytes: usize,
    ) -> Result<Nanos, SimError> {
        self.check_endpoint(from)?;
        self.check_endpoint(to)?;
        let connected = match kind {
            LinkKind::Network => {
                matches!((from, to), (Endpoint::Replica(a), Endpoint::Replica(b)) if a != b)
            }
            LinkKind::Pcie => matches!(
                (from, to),
                (Endpoint::Replica(a), Endpoint::Host(b)) | (Endpoint::Host(a), Endpoint::Replica(b)) if a == b
            ),
        };
        if !connected {
            return Err(SimError::NoLink { kind, from, to });
        }
        let link = self.link(kind).clone();
        let jitter = if link.jitter > 0 {
            self.rng.random_range(0..=link.jitter)
        } else {
            0
        };
        let mut at = self.now + self.cfg.processing_delay + link.one_way_latency + jitter;
        if link.fifo {
            let last = self.last_delivery.entry((kind, from, to)).or_insert(0);
            at = at.max(*last);
            *last = at;
        }
        let bytes = (payload_bytes + link.header_bytes) as u64;
        let owner = match kind {
            LinkKind::Network => from.replica(),
            LinkKind::Pcie => from.replica(),
        };
        for c in [
            match kind {
                LinkKind::Network => &mut self.network,
                LinkKind::Pcie => &mut self.pcie,
            },
            &mut self.per_replica[owner.index()][kind as usize],
        ] {
            c.sent += 1;
            c.bytes += bytes;
            c.payload_bytes += payload_bytes as u64;
        }
        self.push(at, to, Payload::Message { kind, from, msg });
        Ok(at)
    }

    /// Schedules external input for `to` at absolute time `at` (clamped to now).
    pub fn inject(&mut self, at: Nanos, to: Endpoint, msg: M) -> Result<(), SimError> {
        self.check_endpoint(to)?;
        self.push(at.max(self.now), to, Payload::Inject(msg));
        Ok(())
    }

    pub fn set_timer(&mut self, target: Endpoint, delay: Nanos, token: T) -> Result<TimerId, SimError> {
        if delay == 0 {
            return Err(SimError::ZeroDelay);
        }
        self.check_endpoint(target)?;
        let id = TimerId(self.next_timer);
        self.next_timer += 1;
        self.live_timers.insert(id);
        self.timers_set += 1;
        self.push(self.now + delay, target, Payload::Timer { id, token });
        Ok(id)
    }

    /// Cancels a pending timer. Cancelling a fired or unknown timer is a no-op.
    pub fn cancel_timer(&mut self, id: TimerId) {
        if self.live_timers.remove(&id) {
            self.timers_cancelled += 1;
        }
    }

    /// Schedules a crash-stop of `replica` (NIC and host) at `at`.
    pub fn crash(&mut self, replica: ReplicaId, at: Nanos) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::CrashInPast { at, now: self.now });
        }
        self.check_endpoint(Endpoint::Replica(replica))?;
        self.push(at, Endpoint::Replica(replica), Payload::Crash);
        Ok(())
    }

    fn counters_mut(&mut self, kind: LinkKind, owner: ReplicaId) -> [&mut LinkCounters; 2] {
        let global = match kind {
            LinkKind::Network => &mut self.network,
            LinkKind::Pcie => &mut self.pcie,
        };
        [global, &mut self.per_replica[owner.index()][kind as usize]]
    }

    /// Dispatches events until the queue is empty (and the handler schedules
    /// nothing more) or the next event lies beyond `until`.
    pub fn run<H: Handler<M, T>>(&mut self, handler: &mut H, until: Option<Nanos>) -> Result<RunReport, H::Error> {
        loop {
            let Some(Reverse(next)) = self.queue.peek() else {
                if handler.on_quiescent(self)? {
                    continue;
                }
                break;
            };
            if until.is_some_and(|u| next.fire_time > u) {
                break;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            debug_assert!(ev.fire_time >= self.now);
            self.now = ev.fire_time;
            let owner = ev.target.replica();
            let crashed = self.crashed.contains(&owner);
            let category = match ev.payload {
                Payload::Message { kind, from, msg } => {
                    let sender = from.replica();
                    if crashed {
                        for c in self.counters_mut(kind, sender) {
                            c.dropped += 1;
                        }
                        continue;
                    }
                    for c in self.counters_mut(kind, sender) {
                        c.delivered += 1;
                    }
                    handler.on_message(self, kind, from, ev.target, msg)?
                }
                Payload::Inject(msg) => {
                    if crashed {
                        self.injects_dropped += 1;
                        continue;
                    }
                    handler.on_inject(self, ev.target, msg)?
                }
                Payload::Timer { id, token } => {
                    if !self.live_timers.remove(&id) || crashed {
                        continue;
                    }
                    self.timers_fired += 1;
                    handler.on_timer(self, ev.target, token)?
                }
                Payload::Crash => {
                    if !self.crashed.insert(owner) {
                        continue;
                    }
                    handler.on_crash(self, owner)?;
                    Category::Rest
                }
            };
            self.dispatched += 1;
            self.buckets.add(category);
            self.per_replica_buckets[owner.index()].add(category);
            if self.dispatched > self.cfg.event_cap {
                return Err(SimError::EventCapExceeded(self.cfg.event_cap).into());
            }
        }
        Ok(self.report())
    }

    pub fn report(&self) -> RunReport {
        RunReport {
            final_time: self.now,
            events_dispatched: self.dispatched,
            buckets: self.buckets,
            network: self.network,
            pcie: self.pcie,
            timers_set: self.timers_set,
            timers_fired: self.timers_fired,
            timers_cancelled: self.timers_cancelled,
            injects_dropped: self.injects_dropped,
            crashed: self.crashed.iter().copied().collect(),
            pending_events: self.queue.len() as u64,
        }
    }
}
