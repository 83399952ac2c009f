use serde::{Deserialize, Serialize};

use crate::simnet::CategoryCounts;
use crate::types::Nanos;

/// Latency summary with power-of-two buckets. Bucket `i` counts samples in
/// `[2^(i-1), 2^i)` ns, bucket 0 counts zero-latency samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyHistogram {
    pub count: u64,
    pub min_ns: Nanos,
    pub max_ns: Nanos,
    pub mean_ns: f64,
    pub p50_ns: Nanos,
    pub p90_ns: Nanos,
    pub p99_ns: Nanos,
    /// `(upper bound exclusive, count)` for non-empty buckets.
    pub buckets: Vec<(Nanos, u64)>,
}

impl LatencyHistogram {
    pub fn from_samples(mut samples: Vec<Nanos>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let pct = |p: usize| samples[((n * p).div_ceil(100)).clamp(1, n) - 1];
        let mut buckets: Vec<(Nanos, u64)> = Vec::new();
        for &s in &samples {
            let upper = 1u64.checked_shl(64 - s.leading_zeros()).unwrap_or(Nanos::MAX);
            match buckets.last_mut() {
                Some((u, c)) if *u == upper => *c += 1,
                _ => buckets.push((upper, 1)),
            }
        }
        let sum: u128 = samples.iter().map(|&s| u128::from(s)).sum();
        LatencyHistogram {
            count: n as u64,
            min_ns: samples[0],
            max_ns: samples[n - 1],
            mean_ns: (sum as f64 / n as f64 * 1000.0).round() / 1000.0,
            p50_ns: pct(50),
            p90_ns: pct(90),
            p99_ns: pct(99),
            buckets,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcieBreakdown {
    pub write_batches: u64,
    pub durable_acks: u64,
    pub fetches: u64,
    pub fetch_replies: u64,
}

impl PcieBreakdown {
    pub fn total(&self) -> u64 {
        self.write_batches + self.durable_acks + self.fetches + self.fetch_replies
    }

    pub fn merge(&mut self, o: &PcieBreakdown) {
        self.write_batches += o.write_batches;
        self.durable_acks += o.durable_acks;
        self.fetches += o.fetches;
        self.fetch_replies += o.fetch_replies;
    }
}

/// One row of the report: a single replica, or the cluster aggregate.
/// Flat so it maps directly to CSV.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaMetrics {
    pub replica: String,
    pub crashed: bool,
    pub network_messages: u64,
    pub network_bytes: u64,
    pub network_dropped: u64,
    pub pcie_messages: u64,
    pub pcie_bytes: u64,
    pub pcie_payload_bytes: u64,
    pub pcie_write_batches: u64,
    pub pcie_durable_acks: u64,
    pub pcie_fetches: u64,
    pub pcie_fetch_replies: u64,
    pub fast_reads: u64,
    pub slow_reads: u64,
    pub blocked_reads: u64,
    pub writes_committed: u64,
    pub writes_superseded: u64,
    pub writes_rejected: u64,
    pub commits_applied: u64,
    pub stale_acks: u64,
    pub replays: u64,
    pub fills_discarded: u64,
    pub cache_overflows: u64,
    pub cache_evictions: u64,
    pub flushed_writes: u64,
    pub flush_batches: u64,
    pub compactions: u64,
    pub log_entries_compacted: u64,
    pub log_entries_retained: u64,
    pub events_protocol: u64,
    pub events_network: u64,
    pub events_rest: u64,
}

impl ReplicaMetrics {
    pub fn events(&self) -> CategoryCounts {
        CategoryCounts {
            protocol: self.events_protocol,
            network: self.events_network,
            rest: self.events_rest,
        }
    }

    pub fn pcie(&self) -> PcieBreakdown {
        PcieBreakdown {
            write_batches: self.pcie_write_batches,
            durable_acks: self.pcie_durable_acks,
            fetches: self.pcie_fetches,
            fetch_replies: self.pcie_fetch_replies,
        }
    }

    /// Sums every counter into a row labelled `label`.
    pub fn aggregate<'a>(label: &str, rows: impl IntoIterator<Item = &'a ReplicaMetrics>) -> Self {
        let mut a = ReplicaMetrics {
            replica: label.to_string(),
            ..Default::default()
        };
        for r in rows {
            a.crashed |= r.crashed;
            a.network_messages += r.network_messages;
            a.network_bytes += r.network_bytes;
            a.network_dropped += r.network_dropped;
            a.pcie_messages += r.pcie_messages;
            a.pcie_bytes += r.pcie_bytes;
            a.pcie_payload_bytes += r.pcie_payload_bytes;
            a.pcie_write_batches += r.pcie_write_batches;
            a.pcie_durable_acks += r.pcie_durable_acks;
            a.pcie_fetches += r.pcie_fetches;
            a.pcie_fetch_replies += r.pcie_fetch_replies;
            a.fast_reads += r.fast_reads;
            a.slow_reads += r.slow_reads;
            a.blocked_reads += r.blocked_reads;
            a.writes_committed += r.writes_committed;
            a.writes_superseded += r.writes_superseded;
            a.writes_rejected += r.writes_rejected;
            a.commits_applied += r.commits_applied;
            a.stale_acks += r.stale_acks;
            a.replays += r.replays;
            a.fills_discarded += r.fills_discarded;
            a.cache_overflows += r.cache_overflows;
            a.cache_evictions += r.cache_evictions;
            a.flushed_writes += r.flushed_writes;
            a.flush_batches += r.flush_batches;
            a.compactions += r.compactions;
            a.log_entries_compacted += r.log_entries_compacted;
            a.log_entries_retained += r.log_entries_retained;
            a.events_protocol += r.events_protocol;
            a.events_network += r.events_network;
            a.events_rest += r.events_rest;
        }
        a
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCounts {
    pub ops_issued: u64,
    pub reads_completed: u64,
    pub writes_completed: u64,
    pub writes_superseded: u64,
    pub writes_rejected: u64,
    /// Issued but never answered (home replica crashed).
    pub unanswered: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Latencies {
    pub read_fast: LatencyHistogram,
    pub read_slow: LatencyHistogram,
    pub read_blocked: LatencyHistogram,
    pub write: LatencyHistogram,
}

/// Independent audit of every log compaction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogAudit {
    pub compactions_checked: u64,
    pub proposed_removed: u64,
    pub beyond_durable: u64,
}

impl LogAudit {
    pub fn violations(&self) -> u64 {
        self.proposed_removed + self.beyond_durable
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub replicas: usize,
    pub final_time_ns: Nanos,
    pub events_dispatched: u64,
    pub events_protocol: u64,
    pub events_network: u64,
    pub events_rest: u64,
    pub timers_fired: u64,
    pub client: ClientCounts,
    pub latency: Latencies,
    pub log_audit: LogAudit,
    pub per_replica: Vec<ReplicaMetrics>,
    pub aggregate: ReplicaMetrics,
}

impl MetricsReport {
    pub fn events(&self) -> CategoryCounts {
        CategoryCounts {
            protocol: self.events_protocol,
            network: self.events_network,
            rest: self.events_rest,
        }
    }
}
