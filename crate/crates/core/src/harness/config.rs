use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::BackendKind;
use crate::overlay::OverlayKind;
use crate::simnet::DEFAULT_PCIE_RTT_NS;
use crate::types::{Key, Nanos, ReplicaId};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("write ratio must be within [0, 1], got {0}")]
    WriteRatio(f64),
    #[error("at least one replica is required")]
    NoReplicas,
    #[error("too many replicas ({0}); ids are 16-bit")]
    TooManyReplicas(usize),
    #[error("key count must be positive")]
    NoKeys,
    #[error("keys are 8 bytes on the wire, got key size {0}")]
    KeySize(usize),
    #[error("at least one session per replica is required")]
    NoSessions,
    #[error("zipf exponent must be finite and non-negative, got {0}")]
    ZipfTheta(f64),
    #[error("{field} must be positive")]
    Zero { field: &'static str },
    #[error("value size {value_size} exceeds the write limit of {limit} bytes")]
    ValueTooLarge { value_size: usize, limit: usize },
    #[error("invalid distribution '{0}' (expected 'uniform' or 'zipf:<theta>')")]
    Distribution(String),
    #[error("invalid crash spec '{0}' (expected '<replica>@<time_ns>')")]
    CrashSpec(String),
    #[error("crash names replica {replica} but the cluster has {replicas}")]
    CrashReplica { replica: ReplicaId, replicas: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Uniform,
    Zipf {
        theta: f64,
    },
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Zipf { theta } => write!(f, "zipf:{theta}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "uniform" {
            return Ok(Distribution::Uniform);
        }
        let theta = s
            .strip_prefix("zipf:")
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| ConfigError::Distribution(s.to_string()))?;
        if !theta.is_finite() || theta < 0.0 {
            return Err(ConfigError::ZipfTheta(theta));
        }
        Ok(Distribution::Zipf { theta })
    }
}

/// Client workload. `Default` reproduces the reference configuration:
/// five replicas, one million 8-byte keys with 32-byte values, 20% writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub replicas: usize,
    pub key_count: u64,
    pub key_size: usize,
    pub value_size: usize,
    pub write_ratio: f64,
    pub distribution: Distribution,
    pub op_count: u64,
    pub sessions_per_replica: usize,
    /// Mean think time between a session's consecutive requests.
    pub mean_gap_ns: Nanos,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            replicas: 5,
            key_count: 1_000_000,
            key_size: Key::WIRE_BYTES,
            value_size: 32,
            write_ratio: 0.2,
            distribution: Distribution::Uniform,
            op_count: 100_000,
            sessions_per_replica: 2,
            mean_gap_ns: 2_000,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    /// Desk-scale profile: 10k keys, 100k ops.
    pub fn desk() -> Self {
        WorkloadConfig {
            key_count: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.write_ratio) {
            return Err(ConfigError::WriteRatio(self.write_ratio));
        }
        if self.replicas == 0 {
            return Err(ConfigError::NoReplicas);
        }
        if self.replicas > usize::from(u16::MAX) {
            return Err(ConfigError::TooManyReplicas(self.replicas));
        }
        if self.key_count == 0 {
            return Err(ConfigError::NoKeys);
        }
        if self.key_size != Key::WIRE_BYTES {
            return Err(ConfigError::KeySize(self.key_size));
        }
        if self.sessions_per_replica == 0 {
            return Err(ConfigError::NoSessions);
        }
        if let Distribution::Zipf { theta } = self.distribution {
            if !theta.is_finite() || theta < 0.0 {
                return Err(ConfigError::ZipfTheta(theta));
            }
        }
        Ok(())
    }

    pub fn session_count(&self) -> usize {
        self.replicas * self.sessions_per_replica
    }
}

/// Cluster, link and NIC parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub overlay: OverlayKind,
    pub net_latency_ns: Nanos,
    pub net_jitter_ns: Nanos,
    pub net_header_bytes: usize,
    pub net_fifo: bool,
    pub pcie_rtt_ns: Nanos,
    /// `None` means four network round trips.
    pub replay_timeout_ns: Option<Nanos>,
    pub cache_capacity: usize,
    pub batch_size: usize,
    /// `None` disables the flush timer; batches then leave only when full
    /// (plus one drain at the end of the run).
    pub flush_timer_ns: Option<Nanos>,
    pub max_value_bytes: usize,
    pub processing_delay_ns: Nanos,
    pub event_cap: u64,
    pub backend: BackendKind,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            overlay: OverlayKind::Mesh,
            net_latency_ns: 2_000,
            net_jitter_ns: 1_000,
            net_header_bytes: 0,
            net_fifo: true,
            pcie_rtt_ns: DEFAULT_PCIE_RTT_NS,
            replay_timeout_ns: None,
            cache_capacity: 100_000,
            batch_size: 16,
            flush_timer_ns: Some(10_000),
            max_value_bytes: 1_024,
            processing_delay_ns: 0,
            event_cap: 500_000_000,
            backend: BackendKind::Memory,
        }
    }
}

impl ClusterConfig {
    /// Worst-case network round trip, including jitter and handler delay.
    pub fn network_rtt(&self) -> Nanos {
        2 * (self.net_latency_ns + self.net_jitter_ns + self.processing_delay_ns)
    }

    pub fn replay_timeout(&self) -> Nanos {
        self.replay_timeout_ns.unwrap_or(4 * self.network_rtt()).max(1)
    }

    pub fn validate(&self, workload: &WorkloadConfig) -> Result<(), ConfigError> {
        if self.cache_capacity == 0 {
            return Err(ConfigError::Zero {
                field: "cache capacity",
            });
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Zero { field: "batch size" });
        }
        if self.pcie_rtt_ns == 0 {
            return Err(ConfigError::Zero { field: "PCIe RTT" });
        }
        if self.flush_timer_ns == Some(0) {
            return Err(ConfigError::Zero {
                field: "flush timer",
            });
        }
        if workload.value_size > self.max_value_bytes {
            return Err(ConfigError::ValueTooLarge {
                value_size: workload.value_size,
                limit: self.max_value_bytes,
            });
        }
        Ok(())
    }
}

/// Crash-stop failures to inject: `(replica, time)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashSchedule(pub Vec<(ReplicaId, Nanos)>);

impl CrashSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, replicas: usize) -> Result<(), ConfigError> {
        for (r, _) in &self.0 {
            if r.index() >= replicas {
                return Err(ConfigError::CrashReplica {
                    replica: *r,
                    replicas,
                });
            }
        }
        Ok(())
    }

    /// Parses `"<replica>@<time_ns>"`.
    pub fn parse_entry(s: &str) -> Result<(ReplicaId, Nanos), ConfigError> {
        let bad = || ConfigError::CrashSpec(s.to_string());
        let (r, t) = s.split_once('@').ok_or_else(bad)?;
        let r = r.trim().trim_start_matches('r').parse::<u16>().map_err(|_| bad())?;
        let t = t.trim().parse::<Nanos>().map_err(|_| bad())?;
        Ok((ReplicaId(r), t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let w = WorkloadConfig::default();
        assert_eq!((w.replicas, w.key_count, w.key_size, w.value_size), (5, 1_000_000, 8, 32));
        assert_eq!(w.write_ratio, 0.2);
        assert_eq!(WorkloadConfig::desk().key_count, 10_000);
        let c = ClusterConfig::default();
        assert_eq!(c.pcie_rtt_ns, 500);
        assert_eq!(c.replay_timeout(), 4 * c.network_rtt());
    }

    #[test]
    fn validation() {
        let mut w = WorkloadConfig {
            write_ratio: 1.5,
            ..WorkloadConfig::default()
        };
        assert_eq!(w.validate(), Err(ConfigError::WriteRatio(1.5)));
        w.write_ratio = 0.0;
        w.replicas = 0;
        assert_eq!(w.validate(), Err(ConfigError::NoReplicas));
        w.replicas = 3;
        assert_eq!(w.validate(), Ok(()));
        w.distribution = Distribution::Zipf { theta: -1.0 };
        assert!(w.validate().is_err());
        let c = ClusterConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(c.validate(&WorkloadConfig::default()).is_err());
    }

    #[test]
    fn parse_distribution_and_crash() {
        assert_eq!("uniform".parse::<Distribution>(), Ok(Distribution::Uniform));
        assert_eq!("zipf:0.99".parse::<Distribution>(), Ok(Distribution::Zipf { theta: 0.99 }));
        assert!("zipf:x".parse::<Distribution>().is_err());
        assert!("normal".parse::<Distribution>().is_err());
        assert_eq!(CrashSchedule::parse_entry("2@15000"), Ok((ReplicaId(2), 15_000)));
        assert_eq!(CrashSchedule::parse_entry("r1@0"), Ok((ReplicaId(1), 0)));
        assert!(CrashSchedule::parse_entry("2").is_err());
        assert!(CrashSchedule(vec![(ReplicaId(5), 0)]).validate(5).is_err());
    }
}
