use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ClusterConfig, ConfigError, CrashSchedule, WorkloadConfig};
use super::metrics::{
    ClientCounts, Latencies, LatencyHistogram, LogAudit, MetricsReport, PcieBreakdown, ReplicaMetrics,
};
use super::trace::{generate_trace, home_replica, SessionTrace, TraceOp};
use crate::datastore::{
    BackendKind, DatastoreError, DurableAck, HostInterface, MemoryBackend, Population,
};
use crate::history::{History, HistoryEvent, Op, OpResult, Stamp};
use crate::log::EntryStatus;
use crate::overlay::{Overlay, OverlayError, OverlayKind};
use crate::protocol::{
    Effect, Outcome, PcieMessage, ProtocolError, ProtocolMessage, Replica, ReplicaConfig, TimerSlot,
    TimerToken,
};
use crate::simnet::{
    Category, Endpoint, Handler, LinkKind, LinkModel, RunReport, SimConfig, SimError, SimNet, TimerId,
};
use crate::types::{ClientRef, Key, Nanos, ReplicaId, Timestamp, Value};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("overlay: {0}")]
    Overlay(#[from] OverlayError),
    #[error("the leaderless engine needs a full-mesh overlay, got '{0}'")]
    UnsupportedOverlay(OverlayKind),
    #[error("replica {replica}: {source}")]
    Protocol {
        replica: ReplicaId,
        source: ProtocolError,
    },
    #[error("host {replica}: {source}")]
    Datastore {
        replica: ReplicaId,
        source: DatastoreError,
    },
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("unexpected {what} at {at}")]
    Unexpected { what: String, at: Endpoint },
}

/// Everything carried through the event queue.
#[derive(Clone, Debug)]
pub enum SimMsg {
    Net(ProtocolMessage),
    Pcie(PcieMessage),
    /// A client session issues its next request at its home replica.
    Issue { session: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ReadPath {
    Fast,
    Slow,
    Blocked,
}

#[derive(Debug)]
struct Outstanding {
    client: ClientRef,
    event: usize,
    invoked: Nanos,
    // None for writes
    path: Option<ReadPath>,
}

#[derive(Debug)]
struct Session {
    trace: SessionTrace,
    next: usize,
    outstanding: Option<Outstanding>,
}

/// State compared across surviving replicas once the run is quiescent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergence {
    pub live_replicas: Vec<ReplicaId>,
    pub keys_compared: usize,
    /// Keys on which survivors disagree about the committed `(value, ts)`.
    pub divergent_keys: Vec<Key>,
    /// `(replica, key)` pairs still holding an uncommitted write.
    pub unresolved: Vec<(ReplicaId, Key)>,
    /// Acknowledged writes that some survivor does not reflect.
    pub lost_acked_writes: u64,
    /// Log entries still proposed, summed over survivors.
    pub proposed_left: u64,
    /// Committed writes not yet handed to the host, summed over survivors.
    pub undrained_writes: u64,
}

impl Convergence {
    pub fn is_converged(&self) -> bool {
        self.divergent_keys.is_empty()
            && self.unresolved.is_empty()
            && self.lost_acked_writes == 0
            && self.proposed_left == 0
            && self.undrained_writes == 0
    }
}

#[derive(Debug)]
pub struct Experiment {
    pub metrics: MetricsReport,
    pub history: History,
    pub run: RunReport,
    pub convergence: Convergence,
}

struct Cluster {
    cfg: ClusterConfig,
    replicas: Vec<Replica>,
    hosts: Vec<HostInterface>,
    timers: HashMap<(ReplicaId, TimerSlot), TimerId>,
    sessions: Vec<Session>,
    history: Vec<HistoryEvent>,
    seq: u64,
    latencies: [Vec<Nanos>; 4],
    pcie: Vec<PcieBreakdown>,
    audit: LogAudit,
    client: ClientCounts,
    drained: bool,
}

const LAT_FAST: usize = 0;
const LAT_SLOW: usize = 1;
const LAT_BLOCKED: usize = 2;
const LAT_WRITE: usize = 3;

type Net = SimNet<SimMsg, TimerToken>;

impl Cluster {
    fn protocol_err(replica: ReplicaId) -> impl FnOnce(ProtocolError) -> HarnessError {
        move |source| HarnessError::Protocol { replica, source }
    }

    fn stamp(&mut self, ns: Nanos) -> Stamp {
        self.seq += 1;
        Stamp { ns, seq: self.seq }
    }

    fn apply(&mut self, net: &mut Net, r: ReplicaId, effects: Vec<Effect>) -> Result<(), HarnessError> {
        for effect in effects {
            match effect {
                Effect::Send { to, msg } => {
                    let bytes = msg.wire_bytes();
                    net.send(
                        LinkKind::Network,
                        Endpoint::Replica(r),
                        Endpoint::Replica(to),
                        SimMsg::Net(msg),
                        bytes,
                    )?;
                }
                Effect::ToHost(msg) => self.send_pcie(net, Endpoint::Replica(r), Endpoint::Host(r), msg)?,
                Effect::Reply { client, outcome } => self.complete(net, client, outcome)?,
                Effect::SetTimer { token, delay } => {
                    if let Some(old) = self.timers.remove(&(r, token.slot())) {
                        net.cancel_timer(old);
                    }
                    let id = net.set_timer(Endpoint::Replica(r), delay, token)?;
                    self.timers.insert((r, token.slot()), id);
                }
                Effect::CancelTimer { slot } => {
                    if let Some(id) = self.timers.remove(&(r, slot)) {
                        net.cancel_timer(id);
                    }
                }
            }
        }
        Ok(())
    }

    fn send_pcie(&mut self, net: &mut Net, from: Endpoint, to: Endpoint, msg: PcieMessage) -> Result<(), HarnessError> {
        let counts = &mut self.pcie[from.replica().index()];
        match msg {
            PcieMessage::WriteBatch(_) => counts.write_batches += 1,
            PcieMessage::DurableAck(_) => counts.durable_acks += 1,
            PcieMessage::Fetch { .. } => counts.fetches += 1,
            PcieMessage::FetchReply { .. } => counts.fetch_replies += 1,
        }
        let bytes = msg.wire_bytes();
        net.send(LinkKind::Pcie, from, to, SimMsg::Pcie(msg), bytes)?;
        Ok(())
    }

    fn issue(&mut self, net: &mut Net, session: usize) -> Result<Category, HarnessError> {
        let now = net.now();
        let sess = &self.sessions[session];
        let home = sess.trace.home;
        let op = sess.trace.ops[sess.next].clone();
        let client = ClientRef {
            session: sess.trace.session,
            request: op.request,
        };
        let invoke = self.stamp(now);
        self.history.push(HistoryEvent {
            session: client.session,
            request: client.request,
            op: match &op.op {
                TraceOp::Read { key } => Op::Read { key: *key },
                TraceOp::Write { key, value } => Op::Write {
                    key: *key,
                    value: value.clone(),
                },
            },
            invoke,
            response: None,
            result: OpResult::Indeterminate,
            ts: None,
        });
        self.client.ops_issued += 1;
        let replica = &mut self.replicas[home.index()];
        let (effects, path, category) = match op.op {
            TraceOp::Write { key, value } => {
                let effects = replica
                    .handle_client_write(client, key, value, now)
                    .map_err(Self::protocol_err(home))?;
                (effects, None, Category::Protocol)
            }
            TraceOp::Read { key } => {
                let effects = replica.on_client_read(client, key, now);
                let path = if effects.is_empty() {
                    ReadPath::Blocked
                } else if effects
                    .iter()
                    .any(|e| matches!(e, Effect::ToHost(PcieMessage::Fetch { .. })))
                {
                    ReadPath::Slow
                } else {
                    ReadPath::Fast
                };
                (effects, Some(path), Category::Rest)
            }
        };
        self.sessions[session].outstanding = Some(Outstanding {
            client,
            event: self.history.len() - 1,
            invoked: now,
            path,
        });
        self.apply(net, home, effects)?;
        Ok(category)
    }

    /// Records a reply and lets the session move on.
    fn complete(&mut self, net: &mut Net, client: ClientRef, outcome: Outcome) -> Result<(), HarnessError> {
        let s = client.session.0 as usize;
        let at = net.now() + self.cfg.processing_delay_ns;
        let home = self.sessions[s].trace.home;
        let out = match self.sessions[s].outstanding.take() {
            Some(o) if o.client == client => o,
            other => {
                self.sessions[s].outstanding = other;
                return Err(HarnessError::Unexpected {
                    what: format!("reply for {client:?}"),
                    at: Endpoint::Replica(home),
                });
            }
        };
        let response = self.stamp(at);
        let latency = at - out.invoked;
        let ev = &mut self.history[out.event];
        ev.response = Some(response);
        match outcome {
            Outcome::Written { ts } => {
                ev.result = OpResult::Written;
                ev.ts = Some(ts);
                self.client.writes_completed += 1;
                self.latencies[LAT_WRITE].push(latency);
            }
            Outcome::Value { value, ts } => {
                ev.result = OpResult::Value { value };
                ev.ts = Some(ts);
                self.client.reads_completed += 1;
            }
            Outcome::NotFound => {
                ev.result = OpResult::NotFound;
                self.client.reads_completed += 1;
            }
            Outcome::Superseded { .. } => {
                ev.result = OpResult::Superseded;
                self.client.writes_superseded += 1;
            }
            Outcome::Rejected { .. } => {
                ev.result = OpResult::Rejected;
                self.client.writes_rejected += 1;
            }
        }
        if let Some(path) = out.path {
            let slot = match path {
                ReadPath::Fast => LAT_FAST,
                ReadPath::Slow => LAT_SLOW,
                ReadPath::Blocked => LAT_BLOCKED,
            };
            self.latencies[slot].push(latency);
        }
        let sess = &mut self.sessions[s];
        sess.next += 1;
        if let Some(op) = sess.trace.ops.get(sess.next) {
            net.inject(op.issue_at.max(at), Endpoint::Replica(home), SimMsg::Issue { session: s })?;
        }
        Ok(())
    }

    fn on_host(&mut self, net: &mut Net, r: ReplicaId, msg: PcieMessage) -> Result<(), HarnessError> {
        let host = &mut self.hosts[r.index()];
        let reply = match msg {
            PcieMessage::WriteBatch(batch) => PcieMessage::DurableAck(
                host.apply_batch(&batch)
                    .map_err(|source| HarnessError::Datastore { replica: r, source })?,
            ),
            PcieMessage::Fetch { key, client } => PcieMessage::FetchReply {
                key,
                client,
                fetched: host.fetch(key),
            },
            other => {
                return Err(HarnessError::Unexpected {
                    what: format!("{other:?}"),
                    at: Endpoint::Host(r),
                })
            }
        };
        self.send_pcie(net, Endpoint::Host(r), Endpoint::Replica(r), reply)
    }

    fn on_durable_ack(&mut self, net: &mut Net, r: ReplicaId, ack: DurableAck) -> Result<(), HarnessError> {
        let replica = &mut self.replicas[r.index()];
        self.audit.compactions_checked += 1;
        self.audit.proposed_removed += replica
            .log()
            .entries()
            .take_while(|e| e.index <= ack.last_applied)
            .filter(|e| e.status == EntryStatus::Proposed)
            .count() as u64;
        if self.hosts[r.index()].last_applied().is_none_or(|h| ack.last_applied > h) {
            self.audit.beyond_durable += 1;
        }
        let effects = replica.on_durable_ack(ack).map_err(Self::protocol_err(r))?;
        if replica.log().floor() > ack.last_applied + 1 {
            self.audit.beyond_durable += 1;
        }
        self.apply(net, r, effects)
    }

    /// Committed `(value, ts)` of `key` at replica `r`, from its cache or,
    /// when evicted, from its host.
    fn committed_view(&self, r: ReplicaId, key: Key) -> (Option<Value>, Timestamp) {
        let replica = &self.replicas[r.index()];
        let ts = replica.committed_ts(key);
        if let Some(e) = replica.cache().peek(key).filter(|e| e.ts == ts) {
            return (Some(e.value.clone()), ts);
        }
        let fetched = self.hosts[r.index()].fetch(key);
        if fetched.ts == ts {
            (fetched.value, ts)
        } else {
            (None, fetched.ts)
        }
    }

    fn convergence(&self) -> Convergence {
        let live: Vec<ReplicaId> = self
            .replicas
            .iter()
            .filter(|r| !r.is_crashed())
            .map(Replica::id)
            .collect();
        let mut keys: BTreeSet<Key> = self
            .history
            .iter()
            .filter(|e| e.op.is_write())
            .map(HistoryEvent::key)
            .collect();
        for r in &live {
            keys.extend(self.replicas[r.index()].known_keys());
        }
        let mut c = Convergence {
            live_replicas: live.clone(),
            keys_compared: keys.len(),
            ..Default::default()
        };
        let mut views: BTreeMap<Key, Vec<(Option<Value>, Timestamp)>> = BTreeMap::new();
        for &key in &keys {
            let v: Vec<_> = live.iter().map(|r| self.committed_view(*r, key)).collect();
            if v.windows(2).any(|w| w[0] != w[1]) || v.iter().any(|(val, _)| val.is_none()) {
                c.divergent_keys.push(key);
            }
            for r in &live {
                if self.replicas[r.index()].key_state(key) != crate::protocol::KeyState::Valid {
                    c.unresolved.push((*r, key));
                }
            }
            views.insert(key, v);
        }
        for e in &self.history {
            let (Op::Write { key, value }, Some(ts), OpResult::Written) = (&e.op, e.ts, &e.result) else {
                continue;
            };
            let ok = views[key]
                .iter()
                .all(|(v, t)| *t > ts || (*t == ts && v.as_ref() == Some(value)));
            c.lost_acked_writes += u64::from(!ok);
        }
        for r in &live {
            let replica = &self.replicas[r.index()];
            c.proposed_left += replica.log().uncommitted_entries().len() as u64;
            c.undrained_writes += (replica.cache().staged_len() + replica.cache().buffered_len()) as u64;
        }
        c
    }

    fn metrics(&self, net: &Net, seed: u64) -> MetricsReport {
        let per_replica: Vec<ReplicaMetrics> = self
            .replicas
            .iter()
            .map(|rep| {
                let r = rep.id();
                let n = net.replica_counters(r, LinkKind::Network);
                let p = net.replica_counters(r, LinkKind::Pcie);
                let pc = &self.pcie[r.index()];
                let st = rep.stats();
                let ev = net.replica_buckets(r);
                ReplicaMetrics {
                    replica: r.to_string(),
                    crashed: rep.is_crashed(),
                    network_messages: n.sent,
                    network_bytes: n.bytes,
                    network_dropped: n.dropped,
                    pcie_messages: p.sent,
                    pcie_bytes: p.bytes,
                    pcie_payload_bytes: p.payload_bytes,
                    pcie_write_batches: pc.write_batches,
                    pcie_durable_acks: pc.durable_acks,
                    pcie_fetches: pc.fetches,
                    pcie_fetch_replies: pc.fetch_replies,
                    fast_reads: st.fast_reads,
                    slow_reads: st.slow_reads,
                    blocked_reads: st.blocked_reads,
                    writes_committed: st.writes_committed,
                    writes_superseded: st.writes_superseded,
                    writes_rejected: st.writes_rejected,
                    commits_applied: st.commits_applied,
                    stale_acks: st.stale_acks,
                    replays: st.replays,
                    fills_discarded: st.fills_discarded,
                    cache_overflows: rep.cache().overflow_count(),
                    cache_evictions: rep.cache().eviction_count(),
                    flushed_writes: st.flushed_writes,
                    flush_batches: st.flush_batches,
                    compactions: st.compactions,
                    log_entries_compacted: st.entries_compacted,
                    log_entries_retained: rep.log().len() as u64,
                    events_protocol: ev.protocol,
                    events_network: ev.network,
                    events_rest: ev.rest,
                }
            })
            .collect();
        let aggregate = ReplicaMetrics::aggregate("all", &per_replica);
        let report = net.report();
        let hist = |i: usize| LatencyHistogram::from_samples(self.latencies[i].clone());
        let mut client = self.client.clone();
        client.unanswered = self.history.iter().filter(|e| e.response.is_none()).count() as u64;
        MetricsReport {
            seed,
            replicas: self.replicas.len(),
            final_time_ns: report.final_time,
            events_dispatched: report.events_dispatched,
            events_protocol: report.buckets.protocol,
            events_network: report.buckets.network,
            events_rest: report.buckets.rest,
            timers_fired: report.timers_fired,
            client,
            latency: Latencies {
                read_fast: hist(LAT_FAST),
                read_slow: hist(LAT_SLOW),
                read_blocked: hist(LAT_BLOCKED),
                write: hist(LAT_WRITE),
            },
            log_audit: self.audit.clone(),
            per_replica,
            aggregate,
        }
    }
}

impl Handler<SimMsg, TimerToken> for Cluster {
    type Error = HarnessError;

    fn on_message(
        &mut self,
        net: &mut Net,
        kind: LinkKind,
        from: Endpoint,
        to: Endpoint,
        msg: SimMsg,
    ) -> Result<Category, HarnessError> {
        let now = net.now();
        match (kind, to, msg) {
            (LinkKind::Network, Endpoint::Replica(r), SimMsg::Net(m)) => {
                let replica = &mut self.replicas[r.index()];
                let effects = match m {
                    ProtocolMessage::Inv { key, value, ts, .. } => {
                        replica.on_inv(from.replica(), key, value, ts)
                    }
                    ProtocolMessage::Ack { key, ts, from } => replica.on_ack(key, ts, from, now),
                    ProtocolMessage::Commit { key, ts } => replica.on_commit(key, ts, now),
                    other => {
                        return Err(HarnessError::Unexpected {
                            what: format!("{other:?}"),
                            at: to,
                        })
                    }
                }
                .map_err(Self::protocol_err(r))?;
                self.apply(net, r, effects)?;
                Ok(Category::Network)
            }
            (LinkKind::Pcie, Endpoint::Host(r), SimMsg::Pcie(m)) => {
                self.on_host(net, r, m)?;
                Ok(Category::Rest)
            }
            (LinkKind::Pcie, Endpoint::Replica(r), SimMsg::Pcie(m)) => {
                match m {
                    PcieMessage::DurableAck(ack) => self.on_durable_ack(net, r, ack)?,
                    PcieMessage::FetchReply { key, client, fetched } => {
                        let effects = self.replicas[r.index()].on_fetch_reply(key, client, fetched, now);
                        self.apply(net, r, effects)?;
                    }
                    other => {
                        return Err(HarnessError::Unexpected {
                            what: format!("{other:?}"),
                            at: to,
                        })
                    }
                }
                Ok(Category::Rest)
            }
            (_, at, msg) => Err(HarnessError::Unexpected {
                what: format!("{msg:?}"),
                at,
            }),
        }
    }

    fn on_inject(&mut self, net: &mut Net, to: Endpoint, msg: SimMsg) -> Result<Category, HarnessError> {
        match msg {
            SimMsg::Issue { session } => self.issue(net, session),
            other => Err(HarnessError::Unexpected {
                what: format!("{other:?}"),
                at: to,
            }),
        }
    }

    fn on_timer(&mut self, net: &mut Net, target: Endpoint, token: TimerToken) -> Result<Category, HarnessError> {
        let r = target.replica();
        self.timers.remove(&(r, token.slot()));
        let now = net.now();
        let replica = &mut self.replicas[r.index()];
        let (effects, category) = match token {
            TimerToken::Replay { key, ts } => (
                replica
                    .on_replay_timeout(key, ts, now)
                    .map_err(Self::protocol_err(r))?,
                Category::Protocol,
            ),
            TimerToken::Flush => (replica.on_flush_timer(), Category::Rest),
        };
        self.apply(net, r, effects)?;
        Ok(category)
    }

    fn on_crash(&mut self, _net: &mut Net, replica: ReplicaId) -> Result<(), HarnessError> {
        self.replicas[replica.index()].crash();
        for other in &mut self.replicas {
            other.remove_member(replica);
        }
        self.timers.retain(|(r, _), _| *r != replica);
        Ok(())
    }

    /// End-of-run drain: hand every partially filled write buffer to the
    /// host once, then let the resulting acks play out.
    fn on_quiescent(&mut self, net: &mut Net) -> Result<bool, HarnessError> {
        if self.drained {
            return Ok(false);
        }
        self.drained = true;
        for i in 0..self.replicas.len() {
            let effects = self.replicas[i].flush_buffer();
            self.apply(net, ReplicaId::from(i), effects)?;
        }
        Ok(net.pending_events() > 0)
    }
}

fn build(workload: &WorkloadConfig, cluster: &ClusterConfig) -> Result<(Vec<Replica>, Vec<HostInterface>, Population), HarnessError> {
    let overlay = Overlay::preset(cluster.overlay, workload.replicas)?;
    if !overlay.is_full_mesh() {
        return Err(HarnessError::UnsupportedOverlay(cluster.overlay));
    }
    let population = Population::generate(workload.key_count, workload.value_size, workload.seed);
    let members: Vec<ReplicaId> = overlay.nodes().collect();
    let warm = (cluster.cache_capacity as u64).min(workload.key_count);
    let mut replicas = Vec::with_capacity(members.len());
    let mut hosts = Vec::with_capacity(members.len());
    for &id in &members {
        let mut replica = Replica::new(ReplicaConfig {
            id,
            targets: overlay.multicast_targets(id)?,
            members: members.clone(),
            replay_timeout: cluster.replay_timeout(),
            flush_timeout: cluster.flush_timer_ns,
            max_value_bytes: cluster.max_value_bytes,
            cache_capacity: cluster.cache_capacity,
            batch_size: cluster.batch_size,
        })
        .map_err(Cluster::protocol_err(id))?;
        replica.warm_cache(&population, warm);
        replicas.push(replica);
        let backend = match cluster.backend {
            BackendKind::Memory => Box::new(MemoryBackend::new(population.clone())),
        };
        hosts.push(HostInterface::new(backend));
    }
    Ok((replicas, hosts, population))
}

/// Builds the cluster, replays the generated client trace through it until
/// quiescence and returns metrics, the client history and the final
/// cross-replica comparison.
pub fn run_experiment(
    workload: &WorkloadConfig,
    cluster: &ClusterConfig,
    crashes: &CrashSchedule,
) -> Result<Experiment, HarnessError> {
    workload.validate()?;
    cluster.validate(workload)?;
    crashes.validate(workload.replicas)?;
    let trace = generate_trace(workload)?;
    let (replicas, hosts, population) = build(workload, cluster)?;

    let mut initial = BTreeMap::new();
    for op in trace.ops() {
        let key = op.op.key();
        initial.entry(key).or_insert_with(|| population.get(key));
    }

    let mut net: Net = SimNet::new(SimConfig {
        replicas: workload.replicas,
        seed: workload.seed,
        network: LinkModel {
            fifo: cluster.net_fifo,
            ..LinkModel::network(cluster.net_latency_ns, cluster.net_jitter_ns, cluster.net_header_bytes)
        },
        pcie: LinkModel::pcie(cluster.pcie_rtt_ns),
        processing_delay: cluster.processing_delay_ns,
        event_cap: cluster.event_cap,
    });
    for (s, sess) in trace.sessions.iter().enumerate() {
        if let Some(first) = sess.ops.first() {
            net.inject(first.issue_at, Endpoint::Replica(sess.home), SimMsg::Issue { session: s })?;
        }
    }
    for &(r, at) in &crashes.0 {
        net.crash(r, at)?;
    }

    let n = workload.replicas;
    let mut c = Cluster {
        cfg: cluster.clone(),
        replicas,
        hosts,
        timers: HashMap::new(),
        sessions: trace
            .sessions
            .into_iter()
            .map(|t| Session {
                trace: t,
                next: 0,
                outstanding: None,
            })
            .collect(),
        history: Vec::with_capacity(workload.op_count as usize),
        seq: 0,
        latencies: Default::default(),
        pcie: vec![PcieBreakdown::default(); n],
        audit: LogAudit::default(),
        client: ClientCounts::default(),
        drained: false,
    };
    let run = net.run(&mut c, None)?;
    let metrics = c.metrics(&net, workload.seed);
    let convergence = c.convergence();
    let history = History {
        initial,
        events: std::mem::take(&mut c.history),
    };
    Ok(Experiment {
        metrics,
        history,
        run,
        convergence,
    })
}

/// Picks a crash point that lands while a write is collecting acks: one
/// nanosecond after the invocation of the median acknowledged write in a
/// failure-free history, at that write's home replica.
pub fn mid_write_crash(history: &History, replicas: usize) -> Option<(ReplicaId, Nanos)> {
    let mut writes: Vec<&HistoryEvent> = history
        .events
        .iter()
        .filter(|e| e.op.is_write() && e.result == OpResult::Written)
        .collect();
    writes.sort_by_key(|e| e.invoke);
    let w = writes.get(writes.len() / 2)?;
    Some((home_replica(w.session, replicas), w.invoke.ns + 1))
}
