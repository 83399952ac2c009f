//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use nicrep::checker::{check_history, CheckerConfig, Overall};
use nicrep::harness::{
    mid_write_crash, run_experiment, ClusterConfig, CrashSchedule, Experiment, WorkloadConfig,
};
use nicrep::history::{History, HistoryEvent, Op, OpResult};
use nicrep::simnet::PCIE_HEADER_BYTES;
use nicrep::types::ReplicaId;

// Pinned tolerances. Every count comparison is exact.
const LIN_SEEDS: u64 = 100;
const LIN_RUNTIME_LIMIT: Duration = Duration::from_secs(120);
const CRASH_SEEDS: u64 = 50;
const LOG_SEEDS: u64 = 100;
const PCIE_RTT_FLOOR_NS: u64 = 500;
const SCALE_LIMIT: Duration = Duration::from_secs(300);
// batch entry: index, key, timestamp, value
const BATCH_ENTRY_OVERHEAD: u64 = 8 + 8 + 10;
const DURABLE_ACK_BYTES: u64 = 8;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(w: &WorkloadConfig, c: &ClusterConfig, crashes: &CrashSchedule) -> Result<Experiment, String> {
    run_experiment(w, c, crashes).map_err(|e| format!("seed {}: {e}", w.seed))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Rewrites one read that started after a completed write of its key to
/// return the key's initial value. Such a read can never be linearized.
fn plant_stale_read(h: &History) -> Option<History> {
    let mut out = h.clone();
    let completed: Vec<&HistoryEvent> = h
        .events
        .iter()
        .filter(|e| e.op.is_write() && e.result == OpResult::Written)
        .collect();
    let victim = h.events.iter().position(|r| {
        matches!(r.op, Op::Read { .. })
            && r.response.is_some()
            && completed
                .iter()
                .any(|w| w.key() == r.key() && w.response.is_some_and(|resp| resp < r.invoke))
    })?;
    out.events[victim].result = match h.initial_value(out.events[victim].key()) {
        Some(v) => OpResult::Value { value: v.clone() },
        None => OpResult::NotFound,
    };
    Some(out)
}

fn lin_workload(seed: u64) -> WorkloadConfig {
    WorkloadConfig {
        replicas: 3,
        key_count: 16,
        op_count: 2_000,
        write_ratio: 0.2,
        seed,
        ..WorkloadConfig::default()
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let cluster = ClusterConfig::default();
    ensure(cluster.net_jitter_ns > 0, || "latencies must be jittered".into())?;
    let checker = CheckerConfig::default();
    let results: Vec<Result<(Overall, History), String>> = (1..=LIN_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let e = run(&lin_workload(seed), &cluster, &CrashSchedule::none())?;
            Ok((check_history(&e.history, &checker).overall(), e.history))
        })
        .collect();
    let mut histories = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (overall, h) = r?;
        ensure(overall == Overall::Ok, || format!("seed {}: checker said {overall:?}", i + 1))?;
        histories.push(h);
    }

    let mut planted = 0;
    let mut entries: Vec<PathBuf> = fs::read_dir(fixtures())
        .map_err(|e| e.to_string())?
        .map(|d| d.map(|d| d.path()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let h = History::read_jsonl(fs::read(&path).map_err(|e| e.to_string())?.as_slice())
            .map_err(|e| format!("{name}: {e}"))?;
        let got = check_history(&h, &checker).overall();
        let want = if name.starts_with("violation_") {
            planted += 1;
            Overall::Violation
        } else {
            Overall::Ok
        };
        ensure(got == want, || format!("fixture {name}: expected {want:?}, got {got:?}"))?;
    }
    for h in histories.iter().take(10) {
        let bad = plant_stale_read(h).ok_or("no read to corrupt")?;
        ensure(check_history(&bad, &checker).overall() == Overall::Violation, || {
            "planted stale read went undetected".into()
        })?;
        planted += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < LIN_RUNTIME_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{LIN_SEEDS} seeds checker Ok on every key; {planted} planted violations detected; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn crash_workload(seed: u64) -> WorkloadConfig {
    WorkloadConfig {
        replicas: 5,
        key_count: 1_000,
        op_count: 2_000,
        seed,
        ..WorkloadConfig::default()
    }
}

/// Crashes a coordinator between its Inv multicast and the returning acks.
fn crash_run(w: &WorkloadConfig, c: &ClusterConfig) -> Result<(Experiment, (ReplicaId, u64)), String> {
    let base = run(w, c, &CrashSchedule::none())?;
    let point = mid_write_crash(&base.history, w.replicas).ok_or("no acked write to target")?;
    let e = run(w, c, &CrashSchedule(vec![point]))?;
    // the targeted write must be in flight when the coordinator dies
    let hit = e.history.events.iter().any(|ev| {
        ev.op.is_write() && ev.invoke.ns + 1 == point.1 && ev.response.is_none()
    });
    ensure(hit, || format!("seed {}: crash at {point:?} missed the write", w.seed))?;
    Ok((e, point))
}

fn criterion_2() -> Verdict {
    let cluster = ClusterConfig::default();
    let checker = CheckerConfig::default();
    let replays: Vec<Result<u64, String>> = (1..=CRASH_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let w = crash_workload(seed);
            let (e, _) = crash_run(&w, &cluster)?;
            let c = &e.convergence;
            ensure(c.live_replicas.len() == w.replicas - 1, || format!("seed {seed}: survivors {:?}", c.live_replicas))?;
            ensure(c.divergent_keys.is_empty(), || format!("seed {seed}: divergent {:?}", c.divergent_keys))?;
            ensure(c.unresolved.is_empty(), || format!("seed {seed}: unresolved {:?}", c.unresolved))?;
            ensure(c.lost_acked_writes == 0, || format!("seed {seed}: {} acked writes lost", c.lost_acked_writes))?;
            ensure(c.is_converged(), || format!("seed {seed}: {c:?}"))?;
            let overall = check_history(&e.history, &checker).overall();
            ensure(overall == Overall::Ok, || format!("seed {seed}: checker {overall:?}"))?;
            Ok(e.metrics.aggregate.replays)
        })
        .collect();
    let mut total = 0;
    for r in replays {
        total += r?;
    }
    ensure(total > 0, || "no replay ever fired".into())?;
    Ok(format!(
        "{CRASH_SEEDS} seeds converged exactly, acked writes all present, checker Ok ({total} replays)"
    ))
}

fn criterion_3() -> Verdict {
    let n = 5u64;
    let w = WorkloadConfig {
        replicas: n as usize,
        key_count: 100_000,
        op_count: 5_000,
        write_ratio: 0.2,
        seed: 3,
        ..WorkloadConfig::default()
    };
    let e = run(&w, &ClusterConfig::default(), &CrashSchedule::none())?;
    let m = &e.metrics;
    let writes = m.aggregate.writes_committed;
    ensure(writes == 1_000, || format!("{writes} committed writes"))?;
    ensure(m.client.writes_superseded == 0, || "a write was superseded".into())?;
    let expected = 3 * (n - 1) * writes;
    ensure(m.aggregate.network_messages == expected, || {
        format!("{} network messages, expected {expected}", m.aggregate.network_messages)
    })?;
    ensure(m.aggregate.network_messages == 12_000, || "closed form is not 12,000".into())?;

    let reads_only = WorkloadConfig {
        write_ratio: 0.0,
        ..w
    };
    let r = run(&reads_only, &ClusterConfig::default(), &CrashSchedule::none())?;
    ensure(r.metrics.client.reads_completed == 5_000, || "reads did not complete".into())?;
    ensure(r.metrics.aggregate.network_messages == 0, || {
        format!("{} network messages for reads", r.metrics.aggregate.network_messages)
    })?;
    Ok(format!("N=5, W=1000: {expected} protocol messages; 5000 reads: 0 network messages"))
}

fn criterion_4() -> Verdict {
    let keys = 10_000u64;
    let w = WorkloadConfig {
        key_count: keys,
        op_count: 20_000,
        seed: 4,
        ..WorkloadConfig::default()
    };
    let full = ClusterConfig {
        cache_capacity: keys as usize,
        ..ClusterConfig::default()
    };
    let e = run(&w, &full, &CrashSchedule::none())?;
    let a = &e.metrics.aggregate;
    ensure(a.slow_reads == 0, || format!("{} slow reads with a full cache", a.slow_reads))?;
    ensure(a.pcie_fetches + a.pcie_fetch_replies == 0, || "fetch traffic with a full cache".into())?;
    ensure(a.pcie_messages == a.pcie_write_batches + a.pcie_durable_acks, || {
        format!("{} PCIe messages but {} batches + {} acks", a.pcie_messages, a.pcie_write_batches, a.pcie_durable_acks)
    })?;
    ensure(a.pcie_write_batches == a.flush_batches, || "batch accounting mismatch".into())?;
    let (full_batches, full_acks) = (a.pcie_write_batches, a.pcie_durable_acks);

    let tenth = ClusterConfig {
        cache_capacity: (keys / 10) as usize,
        ..ClusterConfig::default()
    };
    let e = run(&w, &tenth, &CrashSchedule::none())?;
    let a = &e.metrics.aggregate;
    ensure(a.slow_reads > 0, || "no cache misses at 10% capacity".into())?;
    ensure(a.pcie_fetches == a.slow_reads && a.pcie_fetch_replies == a.slow_reads, || {
        format!("{} misses, {} fetches, {} replies", a.slow_reads, a.pcie_fetches, a.pcie_fetch_replies)
    })?;
    ensure(
        a.pcie_messages == a.pcie_write_batches + a.pcie_durable_acks + 2 * a.slow_reads,
        || "PCIe total is not batches + acks + 2 per miss".into(),
    )?;
    let slow = &e.metrics.latency.read_slow;
    ensure(slow.count == a.slow_reads, || "slow latency samples mismatch".into())?;
    ensure(slow.min_ns >= PCIE_RTT_FLOOR_NS, || format!("slow read took {} ns", slow.min_ns))?;
    let completed = e.metrics.client.reads_completed;
    ensure(a.fast_reads + a.slow_reads + a.blocked_reads == completed, || "read paths do not sum".into())?;
    Ok(format!(
        "full cache: 0 slow reads, PCIe = {} batches + {} acks; 10% cache: {} misses x 2 PCIe msgs, min {} ns",
        full_batches,
        full_acks,
        a.slow_reads,
        slow.min_ns
    ))
}

fn criterion_5() -> Verdict {
    let w = WorkloadConfig {
        key_count: 10_000,
        op_count: 10_000,
        seed: 5,
        ..WorkloadConfig::default()
    };
    let mut summary = Vec::new();
    for b in [1usize, 4, 16, 64] {
        let c = ClusterConfig {
            batch_size: b,
            flush_timer_ns: None,
            cache_capacity: 10_000,
            ..ClusterConfig::default()
        };
        let e = run(&w, &c, &CrashSchedule::none())?;
        let mut batches = 0;
        for r in &e.metrics.per_replica {
            let writes = r.flushed_writes;
            ensure(writes == r.commits_applied, || format!("B={b} {}: {writes} flushed of {}", r.replica, r.commits_applied))?;
            let expect = writes.div_ceil(b as u64);
            ensure(r.pcie_write_batches == expect, || {
                format!("B={b} {}: {} batches for {writes} writes, expected {expect}", r.replica, r.pcie_write_batches)
            })?;
            let payload = writes * (BATCH_ENTRY_OVERHEAD + w.value_size as u64) + r.pcie_durable_acks * DURABLE_ACK_BYTES;
            ensure(r.pcie_payload_bytes == payload, || format!("B={b} {}: payload {} != {payload}", r.replica, r.pcie_payload_bytes))?;
            ensure(r.pcie_bytes == payload + PCIE_HEADER_BYTES as u64 * r.pcie_messages, || {
                format!("B={b} {}: header accounting off", r.replica)
            })?;
            batches += r.pcie_write_batches;
        }
        summary.push(format!("B={b}: {batches}"));
    }
    Ok(format!("batch counts exact per replica ({}); bytes = payload + 32/msg", summary.join(", ")))
}

fn criterion_6() -> Verdict {
    let results: Vec<Result<(u64, bool), String>> = (1..=LOG_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let w = WorkloadConfig {
                replicas: 3 + (seed % 3) as usize,
                key_count: 64,
                op_count: 1_500,
                write_ratio: 0.3,
                seed,
                ..WorkloadConfig::default()
            };
            let c = ClusterConfig {
                batch_size: [1, 4, 16][(seed % 3) as usize],
                flush_timer_ns: (seed % 2 == 0).then_some(5_000),
                cache_capacity: 32,
                ..ClusterConfig::default()
            };
            let crashed = seed % 2 == 1;
            let e = if crashed {
                crash_run(&WorkloadConfig { key_count: 2_000, ..w.clone() }, &c)?.0
            } else {
                run(&w, &c, &CrashSchedule::none())?
            };
            let audit = &e.metrics.log_audit;
            ensure(audit.violations() == 0, || format!("seed {seed}: {audit:?}"))?;
            ensure(audit.compactions_checked > 0, || format!("seed {seed}: nothing compacted"))?;
            let conv = &e.convergence;
            ensure(conv.lost_acked_writes == 0 && conv.proposed_left == 0 && conv.is_converged(), || {
                format!("seed {seed}: {conv:?}")
            })?;
            Ok((audit.compactions_checked, crashed))
        })
        .collect();
    let mut compactions = 0;
    let mut crash_runs = 0;
    for r in results {
        let (c, crashed) = r?;
        compactions += c;
        crash_runs += u64::from(crashed);
    }
    Ok(format!(
        "{LOG_SEEDS} seeds, {compactions} compactions audited, 0 violations; {crash_runs} crash runs fully replayed"
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nicrep"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

fn criterion_7() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().to_string();
    let flag_sets: [&[&str]; 2] = [
        &["--replicas", "5", "--ops", "10000", "--seed", "7"],
        &["--replicas", "3", "--keys", "64", "--ops", "3000", "--seed", "11", "--crash", "1@40000", "--distribution", "zipf:0.9", "--key-cap", "5000"],
    ];
    let mut files = 0;
    for (i, flags) in flag_sets.iter().enumerate() {
        for format in ["json", "csv"] {
            let mut outs = Vec::new();
            for attempt in 0..2 {
                let report = p(&format!("r{i}{attempt}.{format}"));
                let history = p(&format!("h{i}{attempt}.jsonl"));
                let mut args = vec!["run", "--out", &report, "--format", format, "--history", &history];
                args.extend_from_slice(flags);
                cli(&args)?;
                let read = |f: &str| fs::read(f).map_err(|e| e.to_string());
                outs.push((read(&report)?, read(&history)?));
            }
            ensure(!outs[0].0.is_empty() && !outs[0].1.is_empty(), || "empty output".into())?;
            ensure(outs[0] == outs[1], || format!("flags {flags:?} {format}: outputs differ"))?;
            files += 2;
        }
    }
    Ok(format!("{files} report/history file pairs byte-identical across runs"))
}

fn criterion_8() -> Verdict {
    let w = WorkloadConfig::default();
    ensure(
        (w.replicas, w.key_count, w.key_size, w.value_size, w.op_count) == (5, 1_000_000, 8, 32, 100_000),
        || format!("default workload drifted: {w:?}"),
    )?;
    let start = Instant::now();
    let e = run(&w, &ClusterConfig::default(), &CrashSchedule::none())?;
    let elapsed = start.elapsed();
    ensure(e.history.len() == 100_000, || "not every op ran".into())?;
    ensure(e.history.events.iter().all(|ev| ev.response.is_some()), || "unanswered ops".into())?;
    ensure(elapsed < SCALE_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "5 replicas, 1M keys, 100k ops in {:.1}s ({} events)",
        elapsed.as_secs_f64(),
        e.metrics.events_dispatched
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("linearizability sweep", criterion_1),
        ("crash convergence", criterion_2),
        ("message-count closed form", criterion_3),
        ("dual-path accounting", criterion_4),
        ("batching", criterion_5),
        ("log safety", criterion_6),
        ("determinism", criterion_7),
        ("scale sanity", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
