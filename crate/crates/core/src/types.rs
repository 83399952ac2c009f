//! Identifiers and value types shared by every module.

use std::fmt;

use bytes::Bytes;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Simulated time in integer nanoseconds.
pub type Nanos = u64;

/// Position in a replica's update log.
pub type LogIndex = u64;

/// Identifies one replica (SmartNIC + host pair) in the cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u16);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl From<usize> for ReplicaId {
    fn from(i: usize) -> Self {
        ReplicaId(i as u16)
    }
}

/// An 8-byte key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(pub u64);

impl Key {
    pub const WIRE_BYTES: usize = 8;
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

/// An opaque value. Cloning is cheap (reference counted); values sliced out
/// of a pre-populated store share its allocation.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Value(Bytes);

impl Value {
    pub fn new(bytes: impl Into<Bytes>) -> Self {
        Value(bytes.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<Bytes> for Value {
    fn from(b: Bytes) -> Self {
        Value(b)
    }
}

impl From<&[u8]> for Value {
    fn from(b: &[u8]) -> Self {
        Value(Bytes::copy_from_slice(b))
    }
}

impl From<Vec<u8>> for Value {
    fn from(b: Vec<u8>) -> Self {
        Value(Bytes::from(b))
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = hex::encode(&self.0);
        if hex.len() > 16 {
            write!(f, "Value({}..)", &hex[..16])
        } else {
            write!(f, "Value({hex})")
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s)
            .map(Value::from)
            .map_err(serde::de::Error::custom)
    }
}

/// Per-write version tag. Ordered lexicographically by `(version, origin)`,
/// which gives every key a total order over its writes with a deterministic
/// tie-break between concurrent coordinators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub version: u64,
    pub origin: ReplicaId,
}

impl Timestamp {
    /// Timestamp of pre-populated data that no client has written.
    pub const ZERO: Timestamp = Timestamp {
        version: 0,
        origin: ReplicaId(0),
    };

    pub const WIRE_BYTES: usize = 8 + 2;

    pub fn new(version: u64, origin: impl Into<ReplicaId>) -> Self {
        Timestamp {
            version,
            origin: origin.into(),
        }
    }

    /// The timestamp a coordinator assigns when this is the highest one it knows.
    pub fn successor(self, origin: ReplicaId) -> Self {
        Timestamp {
            version: self.version + 1,
            origin,
        }
    }
}

impl From<u16> for ReplicaId {
    fn from(i: u16) -> Self {
        ReplicaId(i)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.version, self.origin)
    }
}

/// Client session identifier. Sessions are pinned to a home replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u32);

/// Identifies one client request: the issuing session plus a per-session
/// request number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClientRef {
    pub session: SessionId,
    pub request: u64,
}
