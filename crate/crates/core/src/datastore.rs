//! Host-side datastore interface: applies write-back batches from the NIC to
//! a pluggable backend, acknowledges them durably, and serves slow-path
//! fetches.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use bytes::Bytes;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::BufferedWrite;
use crate::types::{Key, LogIndex, Timestamp, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatastoreError {
    #[error("batch index {index} is not above last applied index {last:?}")]
    OutOfOrder {
        index: LogIndex,
        last: Option<LogIndex>,
    },
    #[error("empty batch")]
    EmptyBatch,
}

/// Storage the host interface writes through to.
pub trait DatastoreBackend: Send {
    fn get(&self, key: Key) -> Option<Value>;

    /// Applies writes in order; later writes to a key win.
    fn apply_batch(&mut self, writes: &[(Key, Value)]);

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Memory,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("memory")
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "memory" => Ok(BackendKind::Memory),
            other => Err(format!("unknown backend '{other}' (only 'memory' is available)")),
        }
    }
}

/// Seeded initial contents for keys `0..key_count`, stored as one contiguous
/// buffer so replicas can share it without copying.
#[derive(Clone, Debug)]
pub struct Population {
    key_count: u64,
    value_size: usize,
    data: Bytes,
}

impl Population {
    pub fn generate(key_count: u64, value_size: usize, seed: u64) -> Self {
        let mut data = vec![0u8; key_count as usize * value_size];
        ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15).fill_bytes(&mut data);
        Population {
            key_count,
            value_size,
            data: Bytes::from(data),
        }
    }

    pub fn key_count(&self) -> u64 {
        self.key_count
    }

    pub fn value_size(&self) -> usize {
        self.value_size
    }

    pub fn get(&self, key: Key) -> Option<Value> {
        if key.0 >= self.key_count {
            return None;
        }
        let start = key.0 as usize * self.value_size;
        Some(Value::from(self.data.slice(start..start + self.value_size)))
    }
}

/// Map-backed store layered over a shared pre-populated image.
#[derive(Clone, Debug)]
pub struct MemoryBackend {
    population: Population,
    written: HashMap<Key, Value>,
}

impl MemoryBackend {
    pub fn new(population: Population) -> Self {
        MemoryBackend {
            population,
            written: HashMap::new(),
        }
    }
}

impl DatastoreBackend for MemoryBackend {
    fn get(&self, key: Key) -> Option<Value> {
        self.written
            .get(&key)
            .cloned()
            .or_else(|| self.population.get(key))
    }

    fn apply_batch(&mut self, writes: &[(Key, Value)]) {
        for (key, value) in writes {
            self.written.insert(*key, value.clone());
        }
    }

    fn len(&self) -> usize {
        let extra = self
            .written
            .keys()
            .filter(|k| k.0 >= self.population.key_count())
            .count();
        self.population.key_count() as usize + extra
    }
}

pub fn make_in_memory_backend(key_count: u64, value_size: usize, seed: u64) -> MemoryBackend {
    MemoryBackend::new(Population::generate(key_count, value_size, seed))
}

/// Host notification that every write up to `last_applied` is durable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurableAck {
    pub last_applied: LogIndex,
}

/// Result of a slow-path fetch. Pre-populated and never-written keys carry
/// [`Timestamp::ZERO`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fetched {
    pub value: Option<Value>,
    pub ts: Timestamp,
}

pub struct HostInterface {
    backend: Box<dyn DatastoreBackend>,
    versions: HashMap<Key, Timestamp>,
    last_applied: Option<LogIndex>,
    batches_applied: u64,
}

impl fmt::Debug for HostInterface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HostInterface")
            .field("keys", &self.backend.len())
            .field("last_applied", &self.last_applied)
            .finish()
    }
}

impl HostInterface {
    pub fn new(backend: Box<dyn DatastoreBackend>) -> Self {
        HostInterface {
            backend,
            versions: HashMap::new(),
            last_applied: None,
            batches_applied: 0,
        }
    }

    pub fn last_applied(&self) -> Option<LogIndex> {
        self.last_applied
    }

    pub fn batches_applied(&self) -> u64 {
        self.batches_applied
    }

    pub fn backend(&self) -> &dyn DatastoreBackend {
        self.backend.as_ref()
    }

    /// Applies a write-back batch. Indices must be strictly increasing and
    /// above everything applied before; the PCIe link is FIFO so anything
    /// else is a modelling bug.
    pub fn apply_batch(&mut self, batch: &[BufferedWrite]) -> Result<DurableAck, DatastoreError> {
        let mut last = self.last_applied;
        for w in batch {
            if last.is_some_and(|l| w.index <= l) {
                return Err(DatastoreError::OutOfOrder {
                    index: w.index,
                    last,
                });
            }
            last = Some(w.index);
        }
        let last = last.filter(|_| !batch.is_empty()).ok_or(DatastoreError::EmptyBatch)?;
        let writes: Vec<(Key, Value)> = batch.iter().map(|w| (w.key, w.value.clone())).collect();
        self.backend.apply_batch(&writes);
        for w in batch {
            self.versions.insert(w.key, w.ts);
        }
        self.last_applied = Some(last);
        self.batches_applied += 1;
        Ok(DurableAck { last_applied: last })
    }

    pub fn fetch(&self, key: Key) -> Fetched {
        Fetched {
            value: self.backend.get(key),
            ts: self.versions.get(&key).copied().unwrap_or(Timestamp::ZERO),
        }
    }

    /// Version of the latest applied write to `key`.
    pub fn version(&self, key: Key) -> Timestamp {
        self.versions.get(&key).copied().unwrap_or(Timestamp::ZERO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ReplicaId;

    fn bw(index: LogIndex, key: u64, v: u8) -> BufferedWrite {
        BufferedWrite {
            index,
            key: Key(key),
            value: Value::from(vec![v]),
            ts: Timestamp::new(index + 1, ReplicaId(0)),
        }
    }

    fn host(keys: u64) -> HostInterface {
        HostInterface::new(Box::new(make_in_memory_backend(keys, 32, 7)))
    }

    #[test]
    fn acks_carry_max_index() {
        let mut h = host(0);
        let b1: Vec<_> = (0..4).map(|i| bw(i, i, 0)).collect();
        assert_eq!(h.apply_batch(&b1).unwrap().last_applied, 3);
        let b2: Vec<_> = (4..6).map(|i| bw(i, i, 0)).collect();
        assert_eq!(h.apply_batch(&b2).unwrap().last_applied, 5);
    }

    #[test]
    fn replayed_or_unordered_batches_rejected() {
        let mut h = host(0);
        h.apply_batch(&[bw(0, 0, 0), bw(1, 1, 0)]).unwrap();
        assert_eq!(
            h.apply_batch(&[bw(1, 1, 0)]),
            Err(DatastoreError::OutOfOrder { index: 1, last: Some(1) })
        );
        assert!(h.apply_batch(&[bw(5, 1, 0), bw(3, 1, 0)]).is_err());
        assert_eq!(h.apply_batch(&[]), Err(DatastoreError::EmptyBatch));
        assert_eq!(h.last_applied(), Some(1));
    }

    #[test]
    fn later_write_in_batch_wins() {
        let mut h = host(0);
        h.apply_batch(&[bw(0, 9, 1), bw(1, 9, 2)]).unwrap();
        assert_eq!(h.fetch(Key(9)).value, Some(Value::from(vec![2])));
        assert_eq!(h.fetch(Key(9)).ts, Timestamp::new(2, ReplicaId(0)));
    }

    #[test]
    fn fetch_prepopulated_and_absent() {
        let h = host(10);
        let f = h.fetch(Key(3));
        assert_eq!(f.value.unwrap().len(), 32);
        assert_eq!(f.ts, Timestamp::ZERO);
        assert_eq!(h.fetch(Key(10)).value, None);
    }

    #[test]
    fn population_sizes_and_determinism() {
        assert_eq!(make_in_memory_backend(0, 32, 1).len(), 0);
        assert_eq!(make_in_memory_backend(1_000, 32, 1).len(), 1_000);
        let a = make_in_memory_backend(100, 32, 42);
        let b = make_in_memory_backend(100, 32, 42);
        let c = make_in_memory_backend(100, 32, 43);
        assert!((0..100).all(|k| a.get(Key(k)) == b.get(Key(k))));
        assert!((0..100).any(|k| a.get(Key(k)) != c.get(Key(k))));
    }

    #[test]
    fn backend_kind_parses() {
        assert_eq!("memory".parse::<BackendKind>(), Ok(BackendKind::Memory));
        assert!("redis".parse::<BackendKind>().is_err());
    }
}
