//! Workload generation, experiment wiring, metrics and report output.

pub mod cluster;
pub mod config;
pub mod metrics;
pub mod report;
pub mod trace;

pub use cluster::{mid_write_crash, run_experiment, Convergence, Experiment, HarnessError};
pub use config::{ClusterConfig, ConfigError, CrashSchedule, Distribution, WorkloadConfig};
pub use metrics::{LatencyHistogram, MetricsReport, ReplicaMetrics};
pub use report::{emit_report, render_report, ReportError, ReportFormat};
pub use trace::{generate_trace, ClientOp, SessionTrace, Trace, TraceOp};
