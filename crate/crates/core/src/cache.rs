//! SmartNIC-resident software cache and write-back buffer.
//!
//! Committed writes enter the cache pinned (`durable = false`) and are queued
//! for write-back to the host. An entry becomes evictable only once the host
//! acknowledges a log index at or beyond the entry's latest write. Eviction is
//! LRU over unpinned entries; when everything is pinned the cache is allowed
//! to exceed its capacity and the overflow is counted.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Key, LogIndex, Nanos, Timestamp, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("cache capacity must be at least one entry")]
    ZeroCapacity,
    #[error("write buffer batch size must be at least one entry")]
    ZeroBatchSize,
    #[error("durable mark regressed from {current} to {requested}")]
    DurableRegressed { current: LogIndex, requested: LogIndex },
    #[error("durable ack {requested} is beyond the highest flushed index {flushed:?}")]
    AckBeyondFlushed {
        requested: LogIndex,
        flushed: Option<LogIndex>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: Key,
    pub value: Value,
    pub ts: Timestamp,
    /// Host has applied this write. Non-durable entries are never evicted.
    pub durable: bool,
    pub last_touch: Nanos,
    /// Log index of the latest committed write, if the entry came from a commit.
    pub write_index: Option<LogIndex>,
    tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit { value: Value, ts: Timestamp },
    Miss,
}

/// One write queued for the host.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferedWrite {
    pub index: LogIndex,
    pub key: Key,
    pub value: Value,
    pub ts: Timestamp,
}

/// Entries flushed together in one PCIe message, ascending by log index.
pub type Batch = Vec<BufferedWrite>;

/// Bounded write-back buffer. Flushes when it holds `capacity` entries.
#[derive(Debug)]
pub struct WriteBuffer {
    entries: Vec<BufferedWrite>,
    capacity: usize,
}

impl WriteBuffer {
    pub fn new(capacity: usize) -> Result<Self, CacheError> {
        if capacity == 0 {
            return Err(CacheError::ZeroBatchSize);
        }
        Ok(WriteBuffer {
            entries: Vec::with_capacity(capacity),
            capacity,
        })
    }

    /// Appends one write, returning a full batch when the buffer fills.
    pub fn push(&mut self, write: BufferedWrite) -> Option<Batch> {
        debug_assert!(self.entries.last().is_none_or(|e| e.index < write.index));
        self.entries.push(write);
        (self.entries.len() >= self.capacity).then(|| self.take())
    }

    /// Empties the buffer regardless of fill level.
    pub fn take(&mut self) -> Batch {
        std::mem::replace(&mut self.entries, Vec::with_capacity(self.capacity))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[derive(Debug)]
pub struct NicCache {
    capacity: usize,
    entries: HashMap<Key, CacheEntry>,
    // unpinned entries ordered by last touch
    lru: BTreeMap<u64, Key>,
    // pinned entries keyed by the log index of their latest write
    pinned: BTreeMap<LogIndex, Key>,
    next_tick: u64,
    // committed writes waiting for every lower log index to resolve
    staged: BTreeMap<LogIndex, BufferedWrite>,
    buffer: WriteBuffer,
    highest_flushed: Option<LogIndex>,
    durable_mark: Option<LogIndex>,
    overflow_count: u64,
    eviction_count: u64,
}

impl NicCache {
    pub fn new(capacity: usize, batch_size: usize) -> Result<Self, CacheError> {
        if capacity == 0 {
            return Err(CacheError::ZeroCapacity);
        }
        Ok(NicCache {
            capacity,
            entries: HashMap::new(),
            lru: BTreeMap::new(),
            pinned: BTreeMap::new(),
            next_tick: 0,
            staged: BTreeMap::new(),
            buffer: WriteBuffer::new(batch_size)?,
            highest_flushed: None,
            durable_mark: None,
            overflow_count: 0,
            eviction_count: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pinned_count(&self) -> usize {
        self.pinned.len()
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflow_count
    }

    pub fn eviction_count(&self) -> u64 {
        self.eviction_count
    }

    pub fn buffered_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn staged_len(&self) -> usize {
        self.staged.len()
    }

    pub fn highest_flushed(&self) -> Option<LogIndex> {
        self.highest_flushed
    }

    pub fn durable_mark(&self) -> Option<LogIndex> {
        self.durable_mark
    }

    pub fn contains(&self, key: Key) -> bool {
        self.entries.contains_key(&key)
    }

    pub fn is_pinned(&self, key: Key) -> bool {
        self.entries.get(&key).is_some_and(|e| !e.durable)
    }

    /// Reads without touching; for invariant checks.
    pub fn peek(&self, key: Key) -> Option<&CacheEntry> {
        self.entries.get(&key)
    }

    pub fn lookup(&mut self, key: Key, now: Nanos) -> Lookup {
        let tick = self.bump();
        let Some(entry) = self.entries.get_mut(&key) else {
            return Lookup::Miss;
        };
        if entry.durable {
            self.lru.remove(&entry.tick);
            self.lru.insert(tick, key);
        }
        entry.tick = tick;
        entry.last_touch = now;
        Lookup::Hit {
            value: entry.value.clone(),
            ts: entry.ts,
        }
    }

    /// Commit path for callers that commit in log-index order: installs the
    /// entry and pushes it straight through the write buffer.
    pub fn cache_commit(&mut self, write: BufferedWrite, now: Nanos) -> Vec<Batch> {
        let index = write.index;
        self.commit_staged(write, now);
        self.release_below(index + 1)
    }

    /// Installs a committed write as a pinned entry and stages it for
    /// write-back. Nothing reaches the buffer until [`release_below`] says the
    /// log prefix up to this index is resolved.
    ///
    /// [`release_below`]: NicCache::release_below
    pub fn commit_staged(&mut self, write: BufferedWrite, now: Nanos) {
        let tick = self.bump();
        let key = write.key;
        if let Some(old) = self.entries.get(&key) {
            debug_assert!(old.ts <= write.ts, "commit regressed {key}");
            if old.durable {
                self.lru.remove(&old.tick);
            } else if let Some(i) = old.write_index {
                self.pinned.remove(&i);
            }
        }
        self.pinned.insert(write.index, key);
        self.entries.insert(
            key,
            CacheEntry {
                key,
                value: write.value.clone(),
                ts: write.ts,
                durable: false,
                last_touch: now,
                write_index: Some(write.index),
                tick,
            },
        );
        self.staged.insert(write.index, write);
        self.evict_if_needed();
    }

    /// Moves staged writes with index `< limit` into the write buffer in index
    /// order, returning every batch that filled along the way.
    pub fn release_below(&mut self, limit: LogIndex) -> Vec<Batch> {
        let rest = self.staged.split_off(&limit);
        let ready = std::mem::replace(&mut self.staged, rest);
        let mut batches = Vec::new();
        for (_, write) in ready {
            if let Some(batch) = self.buffer.push(write) {
                self.note_flushed(&batch);
                batches.push(batch);
            }
        }
        batches
    }

    /// Flushes whatever the buffer holds (flush timer or shutdown drain).
    pub fn flush(&mut self) -> Option<Batch> {
        if self.buffer.is_empty() {
            return None;
        }
        let batch = self.buffer.take();
        self.note_flushed(&batch);
        Some(batch)
    }

    fn note_flushed(&mut self, batch: &Batch) {
        if let Some(last) = batch.last() {
            self.highest_flushed = Some(last.index);
        }
    }

    /// Slow-path fill. Returns false when a newer entry is already cached.
    pub fn cache_fill(&mut self, key: Key, value: Value, ts: Timestamp, now: Nanos) -> bool {
        if let Some(existing) = self.entries.get(&key) {
            if existing.ts >= ts {
                return false;
            }
            if !existing.durable {
                // a pinned entry always holds the latest committed write
                return false;
            }
            self.lru.remove(&existing.tick);
        }
        let tick = self.bump();
        self.entries.insert(
            key,
            CacheEntry {
                key,
                value,
                ts,
                durable: true,
                last_touch: now,
                write_index: None,
                tick,
            },
        );
        self.lru.insert(tick, key);
        self.evict_if_needed();
        true
    }

    /// Unpins every entry whose latest write has index `<= up_to`.
    /// Returns the number of entries unpinned.
    pub fn mark_durable(&mut self, up_to: LogIndex) -> Result<usize, CacheError> {
        if let Some(current) = self.durable_mark {
            if up_to < current {
                return Err(CacheError::DurableRegressed {
                    current,
                    requested: up_to,
                });
            }
            if up_to == current {
                return Ok(0);
            }
        }
        if self.highest_flushed.is_none_or(|f| up_to > f) {
            return Err(CacheError::AckBeyondFlushed {
                requested: up_to,
                flushed: self.highest_flushed,
            });
        }
        self.durable_mark = Some(up_to);
        let still_pinned = self.pinned.split_off(&(up_to + 1));
        let released = std::mem::replace(&mut self.pinned, still_pinned);
        let count = released.len();
        for (_, key) in released {
            let entry = self.entries.get_mut(&key).expect("pinned entry exists");
            entry.durable = true;
            self.lru.insert(entry.tick, key);
        }
        self.evict_if_needed();
        Ok(count)
    }

    /// Evicts least-recently-touched unpinned entries until the cache fits.
    pub fn evict_if_needed(&mut self) -> Vec<Key> {
        let mut evicted = Vec::new();
        while self.entries.len() > self.capacity {
            let Some((_, key)) = self.lru.pop_first() else {
                self.overflow_count += 1;
                break;
            };
            self.entries.remove(&key);
            self.eviction_count += 1;
            evicted.push(key);
        }
        evicted
    }

    fn bump(&mut self) -> u64 {
        self.next_tick += 1;
        self.next_tick
    }
}
