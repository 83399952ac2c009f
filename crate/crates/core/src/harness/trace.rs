use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Zipf};
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, Distribution, WorkloadConfig};
use crate::types::{Key, Nanos, ReplicaId, SessionId, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceOp {
    Read { key: Key },
    Write { key: Key, value: Value },
}

impl TraceOp {
    pub fn key(&self) -> Key {
        match self {
            TraceOp::Read { key } | TraceOp::Write { key, .. } => *key,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, TraceOp::Write { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientOp {
    pub request: u64,
    /// Earliest time the session may issue this op; the actual issue waits
    /// for the previous op's response.
    pub issue_at: Nanos,
    pub op: TraceOp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub session: SessionId,
    pub home: ReplicaId,
    pub ops: Vec<ClientOp>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub sessions: Vec<SessionTrace>,
}

impl Trace {
    pub fn op_count(&self) -> usize {
        self.sessions.iter().map(|s| s.ops.len()).sum()
    }

    pub fn write_count(&self) -> usize {
        self.ops().filter(|o| o.op.is_write()).count()
    }

    pub fn ops(&self) -> impl Iterator<Item = &ClientOp> {
        self.sessions.iter().flat_map(|s| s.ops.iter())
    }
}

/// Home replica of a session: sessions are spread round-robin.
pub fn home_replica(session: SessionId, replicas: usize) -> ReplicaId {
    ReplicaId::from(session.0 as usize % replicas)
}

enum KeyDist {
    Uniform(u64),
    Zipf(Zipf<f64>),
}

impl KeyDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Key {
        match self {
            KeyDist::Uniform(n) => Key(rng.random_range(0..*n)),
            // zipf ranks start at 1; rank 1 is the hottest key
            KeyDist::Zipf(z) => Key(z.sample(rng) as u64 - 1),
        }
    }
}

/// Builds the client trace. Exactly `round(write_ratio * op_count)` ops are
/// writes, placed by a seeded shuffle; ops are dealt to sessions
/// round-robin.
pub fn generate_trace(cfg: &WorkloadConfig) -> Result<Trace, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.op_count as usize;
    let writes = (cfg.write_ratio * n as f64).round() as usize;
    let mut is_write: Vec<bool> = (0..n).map(|i| i < writes).collect();
    is_write.shuffle(&mut rng);

    let keys = match cfg.distribution {
        Distribution::Uniform => KeyDist::Uniform(cfg.key_count),
        Distribution::Zipf { theta } => KeyDist::Zipf(
            Zipf::new(cfg.key_count as f64, theta).map_err(|_| ConfigError::ZipfTheta(theta))?,
        ),
    };
    let gap = (cfg.mean_gap_ns > 0)
        .then(|| Exp::new(1.0 / cfg.mean_gap_ns as f64).expect("positive rate"));

    let session_count = cfg.session_count();
    let mut sessions: Vec<SessionTrace> = (0..session_count)
        .map(|s| {
            let session = SessionId(s as u32);
            SessionTrace {
                session,
                home: home_replica(session, cfg.replicas),
                ops: Vec::with_capacity(n / session_count + 1),
            }
        })
        .collect();
    let mut clocks = vec![0 as Nanos; session_count];

    for (i, write) in is_write.into_iter().enumerate() {
        let s = i % session_count;
        let key = keys.sample(&mut rng);
        let op = if write {
            let mut buf = vec![0u8; cfg.value_size];
            rng.fill_bytes(&mut buf);
            TraceOp::Write {
                key,
                value: Value::from(buf),
            }
        } else {
            TraceOp::Read { key }
        };
        if let Some(exp) = &gap {
            clocks[s] += exp.sample(&mut rng).round() as Nanos;
        }
        let session = &mut sessions[s];
        session.ops.push(ClientOp {
            request: session.ops.len() as u64,
            issue_at: clocks[s],
            op,
        });
    }
    Ok(Trace { sessions })
}
