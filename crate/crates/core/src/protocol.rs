//! Per-replica consistency controller running the leaderless two-phase
//! invalidation protocol.
//!
//! A write is coordinated by the replica that receives it: it assigns a
//! timestamp above every version it knows for the key, multicasts the new
//! value (`Inv`), waits for an `Ack` from every live peer, commits locally,
//! answers the client and multicasts `Commit`. Reads are served locally and
//! block while the key holds an uncommitted write. A write whose commit never
//! arrives is replayed, with its original timestamp, when its replay timer
//! expires.
//!
//! Handlers are pure state transitions: they return [`Effect`]s and never
//! touch the network themselves.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{Batch, BufferedWrite, CacheError, Lookup, NicCache};
use crate::datastore::{DurableAck, Fetched, Population};
use crate::log::{LogError, UpdateLog};
use crate::types::{ClientRef, Key, LogIndex, Nanos, ReplicaId, Timestamp, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("log: {0}")]
    Log(#[from] LogError),
    #[error("cache: {0}")]
    Cache(#[from] CacheError),
}

/// Messages carried between replicas, and between clients and their home
/// replica.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolMessage {
    Inv {
        key: Key,
        value: Value,
        ts: Timestamp,
        log_index: LogIndex,
    },
    Ack {
        key: Key,
        ts: Timestamp,
        from: ReplicaId,
    },
    Commit {
        key: Key,
        ts: Timestamp,
    },
    ClientRead {
        client: ClientRef,
        key: Key,
    },
    ClientWrite {
        client: ClientRef,
        key: Key,
        value: Value,
    },
    ClientReply {
        client: ClientRef,
        outcome: Outcome,
    },
}

const TAG_BYTES: usize = 1;
const LEN_BYTES: usize = 4;
const CLIENT_REF_BYTES: usize = 4 + 8;

impl ProtocolMessage {
    /// Serialized payload size, excluding link headers.
    pub fn wire_bytes(&self) -> usize {
        TAG_BYTES
            + match self {
                ProtocolMessage::Inv { value, .. } => {
                    Key::WIRE_BYTES + Timestamp::WIRE_BYTES + 8 + LEN_BYTES + value.len()
                }
                ProtocolMessage::Ack { .. } => Key::WIRE_BYTES + Timestamp::WIRE_BYTES + 2,
                ProtocolMessage::Commit { .. } => Key::WIRE_BYTES + Timestamp::WIRE_BYTES,
                ProtocolMessage::ClientRead { .. } => CLIENT_REF_BYTES + Key::WIRE_BYTES,
                ProtocolMessage::ClientWrite { value, .. } => {
                    CLIENT_REF_BYTES + Key::WIRE_BYTES + LEN_BYTES + value.len()
                }
                ProtocolMessage::ClientReply { outcome, .. } => {
                    CLIENT_REF_BYTES
                        + match outcome {
                            Outcome::Value { value, .. } => {
                                Timestamp::WIRE_BYTES + LEN_BYTES + value.len()
                            }
                            _ => Timestamp::WIRE_BYTES,
                        }
                }
            }
    }

    pub fn key(&self) -> Key {
        match self {
            ProtocolMessage::Inv { key, .. }
            | ProtocolMessage::Ack { key, .. }
            | ProtocolMessage::Commit { key, .. }
            | ProtocolMessage::ClientRead { key, .. }
            | ProtocolMessage::ClientWrite { key, .. } => *key,
            ProtocolMessage::ClientReply { .. } => Key(u64::MAX),
        }
    }
}

/// What a client is told about its request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Write committed at `ts`.
    Written { ts: Timestamp },
    /// Read returned the value committed at `ts`.
    Value { value: Value, ts: Timestamp },
    /// Read of a key the datastore does not hold.
    NotFound,
    /// A higher-timestamped write to the same key overtook this one before
    /// it committed. It may or may not be visible later.
    Superseded { ts: Timestamp },
    /// Request refused without side effects.
    Rejected { reason: String },
}

/// Traffic across the PCIe boundary between a NIC and its host.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PcieMessage {
    WriteBatch(Batch),
    Fetch { key: Key, client: ClientRef },
    DurableAck(DurableAck),
    FetchReply {
        key: Key,
        client: ClientRef,
        fetched: Fetched,
    },
}

impl PcieMessage {
    /// Payload size, excluding the per-packet PCIe header.
    pub fn wire_bytes(&self) -> usize {
        match self {
            PcieMessage::WriteBatch(batch) => batch
                .iter()
                .map(|w| 8 + Key::WIRE_BYTES + Timestamp::WIRE_BYTES + w.value.len())
                .sum(),
            PcieMessage::Fetch { .. } => CLIENT_REF_BYTES + Key::WIRE_BYTES,
            PcieMessage::DurableAck(_) => 8,
            PcieMessage::FetchReply { fetched, .. } => {
                CLIENT_REF_BYTES
                    + Key::WIRE_BYTES
                    + Timestamp::WIRE_BYTES
                    + fetched.value.as_ref().map_or(0, Value::len)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerToken {
    Replay { key: Key, ts: Timestamp },
    Flush,
}

/// Timers occupying the same slot replace each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerSlot {
    Replay(Key),
    Flush,
}

impl TimerToken {
    pub fn slot(&self) -> TimerSlot {
        match self {
            TimerToken::Replay { key, .. } => TimerSlot::Replay(*key),
            TimerToken::Flush => TimerSlot::Flush,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Send { to: ReplicaId, msg: ProtocolMessage },
    ToHost(PcieMessage),
    Reply { client: ClientRef, outcome: Outcome },
    /// Arms `token`, replacing any timer already in its slot.
    SetTimer { token: TimerToken, delay: Nanos },
    CancelTimer { slot: TimerSlot },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingWrite {
    pub key: Key,
    pub value: Value,
    pub ts: Timestamp,
    pub log_index: LogIndex,
    pub acks_needed: BTreeSet<ReplicaId>,
    /// `None` when this replica is replaying somebody else's write.
    pub client: Option<ClientRef>,
    pub issued_at: Nanos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyState {
    Valid,
    Invalid {
        staged_value: Value,
        staged_ts: Timestamp,
        coordinator: ReplicaId,
    },
    WritePending(PendingWrite),
}

impl KeyState {
    fn uncommitted_ts(&self) -> Option<Timestamp> {
        match self {
            KeyState::Valid => None,
            KeyState::Invalid { staged_ts, .. } => Some(*staged_ts),
            KeyState::WritePending(p) => Some(p.ts),
        }
    }
}

#[derive(Debug)]
struct KeyMeta {
    committed: Timestamp,
    state: KeyState,
    blocked: Vec<ClientRef>,
}

impl Default for KeyMeta {
    fn default() -> Self {
        KeyMeta {
            committed: Timestamp::ZERO,
            state: KeyState::Valid,
            blocked: Vec::new(),
        }
    }
}

impl KeyMeta {
    fn highest_known(&self) -> Timestamp {
        self.state
            .uncommitted_ts()
            .map_or(self.committed, |t| t.max(self.committed))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadOutcome {
    ServeLocal { value: Value, ts: Timestamp },
    Blocked,
    CacheMiss,
}

#[derive(Clone, Debug)]
pub struct ReplicaConfig {
    pub id: ReplicaId,
    /// Overlay successors of this replica.
    pub targets: Vec<ReplicaId>,
    /// Every replica in the static configuration, self included.
    pub members: Vec<ReplicaId>,
    pub replay_timeout: Nanos,
    /// `None` disables the flush timer; the buffer then flushes only when full.
    pub flush_timeout: Option<Nanos>,
    pub max_value_bytes: usize,
    pub cache_capacity: usize,
    pub batch_size: usize,
}

/// Per-replica counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaStats {
    pub writes_committed: u64,
    pub writes_superseded: u64,
    pub writes_rejected: u64,
    pub commits_applied: u64,
    pub stale_acks: u64,
    pub replays: u64,
    pub fast_reads: u64,
    pub slow_reads: u64,
    pub blocked_reads: u64,
    pub fills_discarded: u64,
    pub flushed_writes: u64,
    pub flush_batches: u64,
    pub compactions: u64,
    pub entries_compacted: u64,
}

#[derive(Debug)]
pub struct Replica {
    cfg: ReplicaConfig,
    live: BTreeSet<ReplicaId>,
    keys: HashMap<Key, KeyMeta>,
    cache: NicCache,
    log: UpdateLog,
    flush_armed: bool,
    crashed: bool,
    stats: ReplicaStats,
}

impl Replica {
    pub fn new(cfg: ReplicaConfig) -> Result<Self, ProtocolError> {
        let cache = NicCache::new(cfg.cache_capacity, cfg.batch_size)?;
        Ok(Replica {
            live: cfg.members.iter().copied().collect(),
            cfg,
            keys: HashMap::new(),
            cache,
            log: UpdateLog::new(),
            flush_armed: false,
            crashed: false,
            stats: ReplicaStats::default(),
        })
    }

    pub fn id(&self) -> ReplicaId {
        self.cfg.id
    }

    pub fn config(&self) -> &ReplicaConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ReplicaStats {
        &self.stats
    }

    pub fn cache(&self) -> &NicCache {
        &self.cache
    }

    pub fn log(&self) -> &UpdateLog {
        &self.log
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn live_members(&self) -> &BTreeSet<ReplicaId> {
        &self.live
    }

    pub fn key_state(&self, key: Key) -> KeyState {
        self.keys
            .get(&key)
            .map_or(KeyState::Valid, |m| m.state.clone())
    }

    /// Latest committed timestamp for `key` at this replica.
    pub fn committed_ts(&self, key: Key) -> Timestamp {
        self.keys.get(&key).map_or(Timestamp::ZERO, |m| m.committed)
    }

    /// Keys this replica has protocol state for, ascending.
    pub fn known_keys(&self) -> Vec<Key> {
        let mut keys: Vec<Key> = self.keys.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn blocked_reads(&self, key: Key) -> usize {
        self.keys.get(&key).map_or(0, |m| m.blocked.len())
    }

    /// Loads pre-populated keys into the cache as durable entries.
    pub fn warm_cache(&mut self, population: &Population, count: u64) {
        for k in 0..count.min(population.key_count()) {
            if let Some(v) = population.get(Key(k)) {
                self.cache.cache_fill(Key(k), v, Timestamp::ZERO, 0);
            }
        }
    }

    /// Stops all processing. Crash-stop: there is no way back.
    pub fn crash(&mut self) {
        self.crashed = true;
    }

    /// Membership update: `peer` has crashed and is no longer waited for.
    pub fn remove_member(&mut self, peer: ReplicaId) {
        self.live.remove(&peer);
    }

    fn live_targets(&self) -> Vec<ReplicaId> {
        self.cfg
            .targets
            .iter()
            .copied()
            .filter(|t| self.live.contains(t))
            .collect()
    }

    pub fn handle_client_write(
        &mut self,
        client: ClientRef,
        key: Key,
        value: Value,
        now: Nanos,
    ) -> Result<Vec<Effect>, ProtocolError> {
        if self.crashed {
            return Ok(Vec::new());
        }
        if value.len() > self.cfg.max_value_bytes {
            self.stats.writes_rejected += 1;
            return Ok(vec![Effect::Reply {
                client,
                outcome: Outcome::Rejected {
                    reason: format!(
                        "value of {} bytes exceeds limit of {}",
                        value.len(),
                        self.cfg.max_value_bytes
                    ),
                },
            }]);
        }
        let id = self.cfg.id;
        let targets = self.live_targets();
        let meta = self.keys.entry(key).or_default();
        let ts = meta.highest_known().successor(id);
        let mut effects = Vec::new();
        if let KeyState::WritePending(old) = &meta.state {
            self.stats.writes_superseded += u64::from(old.client.is_some());
            effects.extend(superseded_reply(old, ts));
        }
        let log_index = self.log.append(key, value.clone(), ts);
        let pending = PendingWrite {
            key,
            value: value.clone(),
            ts,
            log_index,
            acks_needed: targets.iter().copied().collect(),
            client: Some(client),
            issued_at: now,
        };
        let meta = self.keys.get_mut(&key).expect("inserted above");
        meta.state = KeyState::WritePending(pending);
        if targets.is_empty() {
            effects.extend(self.complete_write(key, now)?);
            return Ok(effects);
        }
        effects.extend(targets.iter().map(|to| Effect::Send {
            to: *to,
            msg: ProtocolMessage::Inv {
                key,
                value: value.clone(),
                ts,
                log_index,
            },
        }));
        effects.push(Effect::SetTimer {
            token: TimerToken::Replay { key, ts },
            delay: self.cfg.replay_timeout,
        });
        Ok(effects)
    }

    pub fn on_inv(
        &mut self,
        from: ReplicaId,
        key: Key,
        value: Value,
        ts: Timestamp,
    ) -> Result<Vec<Effect>, ProtocolError> {
        if self.crashed {
            return Ok(Vec::new());
        }
        let mut effects = Vec::new();
        let meta = self.keys.entry(key).or_default();
        if ts > meta.highest_known() {
            if let KeyState::WritePending(old) = &meta.state {
                self.stats.writes_superseded += u64::from(old.client.is_some());
                effects.extend(superseded_reply(old, ts));
            }
            meta.state = KeyState::Invalid {
                staged_value: value.clone(),
                staged_ts: ts,
                coordinator: from,
            };
            self.log.append(key, value, ts);
            effects.push(Effect::SetTimer {
                token: TimerToken::Replay { key, ts },
                delay: self.cfg.replay_timeout,
            });
        }
        effects.push(Effect::Send {
            to: from,
            msg: ProtocolMessage::Ack {
                key,
                ts,
                from: self.cfg.id,
            },
        });
        Ok(effects)
    }

    pub fn on_ack(
        &mut self,
        key: Key,
        ts: Timestamp,
        from: ReplicaId,
        now: Nanos,
    ) -> Result<Vec<Effect>, ProtocolError> {
        if self.crashed {
            return Ok(Vec::new());
        }
        let done = match self.keys.get_mut(&key).map(|m| &mut m.state) {
            Some(KeyState::WritePending(p)) if p.ts == ts && p.acks_needed.contains(&from) => {
                p.acks_needed.remove(&from);
                p.acks_needed.is_empty()
            }
            _ => {
                self.stats.stale_acks += 1;
                return Ok(Vec::new());
            }
        };
        if done {
            self.complete_write(key, now)
        } else {
            Ok(Vec::new())
        }
    }

    /// All acks are in: commit locally, answer the client, tell everyone.
    fn complete_write(&mut self, key: Key, now: Nanos) -> Result<Vec<Effect>, ProtocolError> {
        let meta = self.keys.get_mut(&key).expect("pending key exists");
        let KeyState::WritePending(p) = std::mem::replace(&mut meta.state, KeyState::Valid) else {
            unreachable!("complete_write without a pending write");
        };
        let mut effects = self.apply_commit(key, p.value, p.ts, now)?;
        effects.extend(self.live_targets().into_iter().map(|to| Effect::Send {
            to,
            msg: ProtocolMessage::Commit { key, ts: p.ts },
        }));
        if let Some(client) = p.client {
            self.stats.writes_committed += 1;
            effects.push(Effect::Reply {
                client,
                outcome: Outcome::Written { ts: p.ts },
            });
        }
        effects.push(Effect::CancelTimer {
            slot: TimerSlot::Replay(key),
        });
        Ok(effects)
    }

    /// Installs `(value, ts)` as the committed state of `key` and answers
    /// every read that was waiting on it.
    fn apply_commit(
        &mut self,
        key: Key,
        value: Value,
        ts: Timestamp,
        now: Nanos,
    ) -> Result<Vec<Effect>, ProtocolError> {
        let meta = self.keys.get_mut(&key).expect("committed key exists");
        debug_assert!(ts > meta.committed, "commit regressed {key}: {} -> {ts}", meta.committed);
        meta.committed = ts;
        meta.state = KeyState::Valid;
        let blocked = std::mem::take(&mut meta.blocked);
        let index = self.log.mark_committed(key, ts)?;
        self.log.resolve_superseded(key, ts);
        self.stats.commits_applied += 1;
        self.cache.commit_staged(
            BufferedWrite {
                index,
                key,
                value: value.clone(),
                ts,
            },
            now,
        );
        let mut effects = self.release_writes();
        self.stats.blocked_reads += blocked.len() as u64;
        effects.extend(blocked.into_iter().map(|client| Effect::Reply {
            client,
            outcome: Outcome::Value {
                value: value.clone(),
                ts,
            },
        }));
        Ok(effects)
    }

    /// Pushes committed writes below the first unresolved log entry into the
    /// write buffer and keeps the flush timer in step with its contents.
    fn release_writes(&mut self) -> Vec<Effect> {
        let limit = self.log.first_uncommitted().unwrap_or(self.log.next_index());
        let mut effects: Vec<Effect> = self
            .cache
            .release_below(limit)
            .into_iter()
            .map(|b| self.batch_effect(b))
            .collect();
        effects.extend(self.sync_flush_timer());
        effects
    }

    fn batch_effect(&mut self, batch: Batch) -> Effect {
        self.stats.flush_batches += 1;
        self.stats.flushed_writes += batch.len() as u64;
        Effect::ToHost(PcieMessage::WriteBatch(batch))
    }

    fn sync_flush_timer(&mut self) -> Option<Effect> {
        let timeout = self.cfg.flush_timeout?;
        let has_data = self.cache.buffered_len() > 0;
        match (has_data, self.flush_armed) {
            (true, false) => {
                self.flush_armed = true;
                Some(Effect::SetTimer {
                    token: TimerToken::Flush,
                    delay: timeout,
                })
            }
            (false, true) => {
                self.flush_armed = false;
                Some(Effect::CancelTimer {
                    slot: TimerSlot::Flush,
                })
            }
            _ => None,
        }
    }

    pub fn on_commit(
        &mut self,
        key: Key,
        ts: Timestamp,
        now: Nanos,
    ) -> Result<Vec<Effect>, ProtocolError> {
        if self.crashed {
            return Ok(Vec::new());
        }
        let Some(meta) = self.keys.get_mut(&key) else {
            return Ok(Vec::new());
        };
        match std::mem::replace(&mut meta.state, KeyState::Valid) {
            KeyState::Invalid {
                staged_value,
                staged_ts,
                ..
            } if staged_ts == ts => {
                let mut effects = self.apply_commit(key, staged_value, ts, now)?;
                effects.push(Effect::CancelTimer {
                    slot: TimerSlot::Replay(key),
                });
                Ok(effects)
            }
            KeyState::WritePending(p) if p.ts == ts => {
                // someone else finished collecting acks for our write
                let mut effects = self.apply_commit(key, p.value, ts, now)?;
                if let Some(client) = p.client {
                    self.stats.writes_committed += 1;
                    effects.push(Effect::Reply {
                        client,
                        outcome: Outcome::Written { ts },
                    });
                }
                effects.push(Effect::CancelTimer {
                    slot: TimerSlot::Replay(key),
                });
                Ok(effects)
            }
            other => {
                meta.state = other;
                Ok(Vec::new())
            }
        }
    }

    /// Read classification. A blocked read is queued and answered when the
    /// key commits.
    pub fn handle_client_read(&mut self, client: ClientRef, key: Key, now: Nanos) -> ReadOutcome {
        if let Some(meta) = self.keys.get_mut(&key) {
            if meta.state.uncommitted_ts().is_some() {
                meta.blocked.push(client);
                return ReadOutcome::Blocked;
            }
        }
        match self.cache.lookup(key, now) {
            Lookup::Hit { value, ts } => ReadOutcome::ServeLocal { value, ts },
            Lookup::Miss => ReadOutcome::CacheMiss,
        }
    }

    /// Read entry point: classifies the read and turns the result into effects.
    pub fn on_client_read(&mut self, client: ClientRef, key: Key, now: Nanos) -> Vec<Effect> {
        if self.crashed {
            return Vec::new();
        }
        match self.handle_client_read(client, key, now) {
            ReadOutcome::ServeLocal { value, ts } => {
                self.stats.fast_reads += 1;
                vec![Effect::Reply {
                    client,
                    outcome: Outcome::Value { value, ts },
                }]
            }
            ReadOutcome::Blocked => Vec::new(),
            ReadOutcome::CacheMiss => vec![Effect::ToHost(PcieMessage::Fetch { key, client })],
        }
    }

    /// Slow-path completion: cache the fetched pair and answer the client.
    pub fn on_fetch_reply(
        &mut self,
        key: Key,
        client: ClientRef,
        fetched: Fetched,
        now: Nanos,
    ) -> Vec<Effect> {
        if self.crashed {
            return Vec::new();
        }
        self.stats.slow_reads += 1;
        let outcome = match fetched.value {
            Some(value) => {
                if !self.cache.cache_fill(key, value.clone(), fetched.ts, now) {
                    self.stats.fills_discarded += 1;
                }
                Outcome::Value {
                    value,
                    ts: fetched.ts,
                }
            }
            None => Outcome::NotFound,
        };
        vec![Effect::Reply { client, outcome }]
    }

    /// Host confirmed every write up to `ack.last_applied`: unpin the cache
    /// and compact the log.
    pub fn on_durable_ack(&mut self, ack: DurableAck) -> Result<Vec<Effect>, ProtocolError> {
        if self.crashed {
            return Ok(Vec::new());
        }
        self.cache.mark_durable(ack.last_applied)?;
        self.log.set_durable(ack.last_applied)?;
        let freed = self.log.compact(ack.last_applied)?;
        self.stats.compactions += 1;
        self.stats.entries_compacted += freed as u64;
        Ok(Vec::new())
    }

    pub fn on_replay_timeout(
        &mut self,
        key: Key,
        ts: Timestamp,
        now: Nanos,
    ) -> Result<Vec<Effect>, ProtocolError> {
        if self.crashed {
            return Ok(Vec::new());
        }
        let targets = self.live_targets();
        let Some(meta) = self.keys.get_mut(&key) else {
            return Ok(Vec::new());
        };
        let (value, client) = match &meta.state {
            KeyState::Invalid {
                staged_value,
                staged_ts,
                ..
            } if *staged_ts == ts => (staged_value.clone(), None),
            KeyState::WritePending(p) if p.ts == ts => (p.value.clone(), p.client),
            _ => return Ok(Vec::new()),
        };
        self.stats.replays += 1;
        let log_index = self
            .log
            .find(key, ts)
            .map(|e| e.index)
            .ok_or(LogError::UnknownEntry { key, ts })?;
        meta.state = KeyState::WritePending(PendingWrite {
            key,
            value: value.clone(),
            ts,
            log_index,
            acks_needed: targets.iter().copied().collect(),
            client,
            issued_at: now,
        });
        if targets.is_empty() {
            return self.complete_write(key, now);
        }
        let mut effects: Vec<Effect> = targets
            .iter()
            .map(|to| Effect::Send {
                to: *to,
                msg: ProtocolMessage::Inv {
                    key,
                    value: value.clone(),
                    ts,
                    log_index,
                },
            })
            .collect();
        effects.push(Effect::SetTimer {
            token: TimerToken::Replay { key, ts },
            delay: self.cfg.replay_timeout,
        });
        Ok(effects)
    }

    pub fn on_flush_timer(&mut self) -> Vec<Effect> {
        if self.crashed {
            return Vec::new();
        }
        self.flush_armed = false;
        self.flush_buffer()
    }

    /// Flushes whatever is buffered. Used by the flush timer and by the
    /// end-of-run drain.
    pub fn flush_buffer(&mut self) -> Vec<Effect> {
        if self.crashed {
            return Vec::new();
        }
        let mut effects: Vec<Effect> = self
            .cache
            .flush()
            .into_iter()
            .map(|b| self.batch_effect(b))
            .collect();
        effects.extend(self.sync_flush_timer());
        effects
    }
}

fn superseded_reply(old: &PendingWrite, by: Timestamp) -> Option<Effect> {
    old.client.map(|client| Effect::Reply {
        client,
        outcome: Outcome::Superseded { ts: by },
    })
}
