//! Append-only per-replica update log.
//!
//! Every accepted proposal is appended as `Proposed`; commit flips the entry
//! to `Committed` in place. The log is compacted from the front up to the
//! durable mark reported by the host, and never past a `Proposed` entry.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Key, LogIndex, Timestamp, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("no log entry for {key} at {ts}")]
    UnknownEntry { key: Key, ts: Timestamp },
    #[error("compaction to {up_to} exceeds durable mark {durable:?}")]
    BeyondDurable {
        up_to: LogIndex,
        durable: Option<LogIndex>,
    },
    #[error("compaction to {up_to} would remove proposed entry {index}")]
    RemovesProposed { up_to: LogIndex, index: LogIndex },
    #[error("durable mark regressed from {current} to {requested}")]
    DurableRegressed { current: LogIndex, requested: LogIndex },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Proposed,
    Committed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: LogIndex,
    pub key: Key,
    pub value: Value,
    pub ts: Timestamp,
    pub status: EntryStatus,
}

#[derive(Debug, Default)]
pub struct UpdateLog {
    floor: LogIndex,
    entries: VecDeque<LogEntry>,
    index_of: HashMap<(Key, Timestamp), LogIndex>,
    proposed: BTreeSet<LogIndex>,
    proposed_by_key: HashMap<Key, BTreeMap<Timestamp, LogIndex>>,
    durable: Option<LogIndex>,
}

impl UpdateLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of the first retained entry.
    pub fn floor(&self) -> LogIndex {
        self.floor
    }

    pub fn next_index(&self) -> LogIndex {
        self.floor + self.entries.len() as LogIndex
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn durable_mark(&self) -> Option<LogIndex> {
        self.durable
    }

    pub fn append(&mut self, key: Key, value: Value, ts: Timestamp) -> LogIndex {
        let index = self.next_index();
        self.entries.push_back(LogEntry {
            index,
            key,
            value,
            ts,
            status: EntryStatus::Proposed,
        });
        self.index_of.insert((key, ts), index);
        self.proposed.insert(index);
        self.proposed_by_key.entry(key).or_default().insert(ts, index);
        index
    }

    pub fn get(&self, index: LogIndex) -> Option<&LogEntry> {
        index
            .checked_sub(self.floor)
            .and_then(|off| self.entries.get(off as usize))
    }

    pub fn find(&self, key: Key, ts: Timestamp) -> Option<&LogEntry> {
        self.index_of.get(&(key, ts)).and_then(|i| self.get(*i))
    }

    /// Flips the `(key, ts)` entry to committed; idempotent. Returns its index.
    pub fn mark_committed(&mut self, key: Key, ts: Timestamp) -> Result<LogIndex, LogError> {
        let index = *self
            .index_of
            .get(&(key, ts))
            .ok_or(LogError::UnknownEntry { key, ts })?;
        self.commit_index(index);
        Ok(index)
    }

    /// Commits every still-proposed entry of `key` older than `ts`. Those
    /// writes were overwritten by the newer one and will never be committed
    /// on their own. Returns the affected indices.
    pub fn resolve_superseded(&mut self, key: Key, ts: Timestamp) -> Vec<LogIndex> {
        let Some(per_key) = self.proposed_by_key.get(&key) else {
            return Vec::new();
        };
        let stale: Vec<LogIndex> = per_key.range(..ts).map(|(_, i)| *i).collect();
        for index in &stale {
            self.commit_index(*index);
        }
        stale
    }

    fn commit_index(&mut self, index: LogIndex) {
        let off = (index - self.floor) as usize;
        let entry = &mut self.entries[off];
        if entry.status == EntryStatus::Committed {
            return;
        }
        entry.status = EntryStatus::Committed;
        self.proposed.remove(&index);
        if let Some(per_key) = self.proposed_by_key.get_mut(&entry.key) {
            per_key.remove(&entry.ts);
            if per_key.is_empty() {
                self.proposed_by_key.remove(&entry.key);
            }
        }
    }

    /// Lowest index that is still `Proposed`, if any.
    pub fn first_uncommitted(&self) -> Option<LogIndex> {
        self.proposed.first().copied()
    }

    /// All `Proposed` entries in index order.
    pub fn uncommitted_entries(&self) -> Vec<&LogEntry> {
        self.proposed.iter().filter_map(|i| self.get(*i)).collect()
    }

    /// Records the host's durable high-water mark. Equal marks are a no-op.
    pub fn set_durable(&mut self, mark: LogIndex) -> Result<(), LogError> {
        match self.durable {
            Some(current) if mark < current => Err(LogError::DurableRegressed {
                current,
                requested: mark,
            }),
            _ => {
                self.durable = Some(mark);
                Ok(())
            }
        }
    }

    /// Removes every entry with index `<= up_to`. Returns how many were freed.
    pub fn compact(&mut self, up_to: LogIndex) -> Result<usize, LogError> {
        if self.durable.is_none_or(|d| up_to > d) {
            return Err(LogError::BeyondDurable {
                up_to,
                durable: self.durable,
            });
        }
        if let Some(first) = self.first_uncommitted() {
            if first <= up_to {
                return Err(LogError::RemovesProposed { up_to, index: first });
            }
        }
        let end = self.next_index();
        let mut freed = 0;
        while self.entries.front().is_some_and(|e| e.index <= up_to) {
            let entry = self.entries.pop_front().expect("front exists");
            self.index_of.remove(&(entry.key, entry.ts));
            freed += 1;
        }
        self.floor = self.floor.max((up_to + 1).min(end));
        Ok(freed)
    }

    /// Retained entries, for debugging dumps.
    pub fn entries(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter()
    }
}
