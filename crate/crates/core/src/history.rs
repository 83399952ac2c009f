//! Client operation histories and their JSON-lines encoding.
//!
//! A history file holds one record per line: `initial` records give the
//! pre-run value of each key that appears in the history, `op` records
//! describe a client operation with its invocation and response stamps.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Key, Nanos, SessionId, Timestamp, Value};

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate request {request} in session {session:?}")]
    DuplicateRequest { session: SessionId, request: u64 },
    #[error("request {request} in session {session:?} responds before it is invoked")]
    BadInterval { session: SessionId, request: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Point on the simulated timeline. `seq` breaks ties between events
/// recorded at the same nanosecond.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub ns: Nanos,
    pub seq: u64,
}

impl Stamp {
    pub const INFINITY: Stamp = Stamp {
        ns: Nanos::MAX,
        seq: u64::MAX,
    };
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Op {
    Read { key: Key },
    Write { key: Key, value: Value },
}

impl Op {
    pub fn key(&self) -> Key {
        match self {
            Op::Read { key } | Op::Write { key, .. } => *key,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, Op::Write { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OpResult {
    Written,
    Value { value: Value },
    NotFound,
    /// Overtaken by a newer write before committing; may or may not be visible.
    Superseded,
    Rejected,
    /// No response was ever delivered (home replica crashed).
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub session: SessionId,
    pub request: u64,
    pub op: Op,
    pub invoke: Stamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Stamp>,
    pub result: OpResult,
    /// Version reported by the replica, for debugging only. The checker
    /// never looks at it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<Timestamp>,
}

impl HistoryEvent {
    pub fn key(&self) -> Key {
        self.op.key()
    }

    /// Whether the operation definitely took effect and has a real response.
    pub fn is_determinate(&self) -> bool {
        self.response.is_some()
            && !matches!(self.result, OpResult::Superseded | OpResult::Indeterminate)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Initial {
        key: Key,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<Value>,
    },
    Op(HistoryEvent),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    /// Pre-run value per key; a key absent here starts as not-found.
    pub initial: BTreeMap<Key, Option<Value>>,
    pub events: Vec<HistoryEvent>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn initial_value(&self, key: Key) -> Option<&Value> {
        self.initial.get(&key).and_then(|v| v.as_ref())
    }

    /// Events grouped by key, each group in invocation order.
    pub fn by_key(&self) -> BTreeMap<Key, Vec<&HistoryEvent>> {
        let mut out: BTreeMap<Key, Vec<&HistoryEvent>> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.key()).or_default().push(e);
        }
        for ops in out.values_mut() {
            ops.sort_by_key(|e| e.invoke);
        }
        out
    }

    /// Checks the structural invariants: unique request ids per session and
    /// invocation strictly before response.
    pub fn validate(&self) -> Result<(), HistoryError> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.events {
            if !seen.insert((e.session, e.request)) {
                return Err(HistoryError::DuplicateRequest {
                    session: e.session,
                    request: e.request,
                });
            }
            if e.response.is_some_and(|r| r <= e.invoke) {
                return Err(HistoryError::BadInterval {
                    session: e.session,
                    request: e.request,
                });
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), HistoryError> {
        for (key, value) in &self.initial {
            let rec = Record::Initial {
                key: *key,
                value: value.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        for e in &self.events {
            serde_json::to_writer(&mut w, &Record::Op(e.clone()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, HistoryError> {
        let mut h = History::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|source| HistoryError::Parse {
                line: i + 1,
                source,
            })?;
            match rec {
                Record::Initial { key, value } => {
                    h.initial.insert(key, value);
                }
                Record::Op(e) => h.events.push(e),
            }
        }
        h.validate()?;
        Ok(h)
    }
}
