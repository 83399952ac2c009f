use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use nicrep::checker::{check_history, CheckReport, CheckerConfig, Overall, Verdict, DEFAULT_KEY_CAP};
use nicrep::datastore::BackendKind;
use nicrep::harness::{
    emit_report, run_experiment, ClusterConfig, CrashSchedule, Distribution, Experiment, HarnessError,
    ReportFormat, WorkloadConfig,
};
use nicrep::history::History;
use nicrep::overlay::OverlayKind;
use nicrep::types::{Nanos, ReplicaId};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VIOLATION: u8 = 3;
const EXIT_UNCHECKED: u8 = 4;

/// Simulator for SmartNIC-offloaded leaderless replication.
///
/// Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 consistency
/// violation (or divergence), 4 history too large to check.
#[derive(Parser, Debug)]
#[command(name = "nicrep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and optionally write its report and history.
    Run(RunArgs),
    /// Check a JSON-lines history file.
    Check(CheckArgs),
    /// Run and check a range of seeds in parallel.
    Sweep(SweepArgs),
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&r) {
        Ok(r)
    } else {
        Err(format!("{r} is not within [0, 1]"))
    }
}

fn parse_crash(s: &str) -> Result<(ReplicaId, Nanos), String> {
    CrashSchedule::parse_entry(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u16).range(1..))]
    replicas: u16,
    #[arg(long = "keys", default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    key_count: u64,
    #[arg(long, default_value_t = 8)]
    key_size: usize,
    #[arg(long, default_value_t = 32)]
    value_size: usize,
    #[arg(long, default_value_t = 0.2, value_parser = parse_ratio)]
    write_ratio: f64,
    /// `uniform` or `zipf:<theta>`.
    #[arg(long, default_value = "uniform")]
    distribution: Distribution,
    #[arg(long = "ops", default_value_t = 100_000)]
    op_count: u64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    sessions_per_replica: u64,
    #[arg(long, default_value_t = 2_000)]
    mean_gap_ns: Nanos,
    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value_t = 100_000)]
    cache_capacity: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// 0 disables the flush timer.
    #[arg(long, default_value_t = 10_000)]
    flush_timer_ns: Nanos,
    #[arg(long, default_value_t = 2_000)]
    net_latency_ns: Nanos,
    #[arg(long, default_value_t = 1_000)]
    net_jitter_ns: Nanos,
    #[arg(long, default_value_t = 0)]
    net_header_bytes: usize,
    #[arg(long, default_value_t = 500)]
    pcie_rtt_ns: Nanos,
    /// Defaults to four worst-case network round trips.
    #[arg(long)]
    replay_timeout_ns: Option<Nanos>,
    #[arg(long, default_value_t = 0)]
    processing_delay_ns: Nanos,
    #[arg(long, default_value_t = 1_024)]
    max_value_bytes: usize,
    #[arg(long, default_value = "mesh")]
    overlay: OverlayKind,
    #[arg(long, default_value = "memory")]
    backend: BackendKind,
    /// Crash-stop `<replica>@<time_ns>`; repeatable.
    #[arg(long = "crash", value_parser = parse_crash)]
    crashes: Vec<(ReplicaId, Nanos)>,
    /// Per-key op limit for the linearizability search.
    #[arg(long, default_value_t = DEFAULT_KEY_CAP)]
    key_cap: usize,
}

impl ExperimentArgs {
    fn workload(&self, seed: u64) -> WorkloadConfig {
        WorkloadConfig {
            replicas: usize::from(self.replicas),
            key_count: self.key_count,
            key_size: self.key_size,
            value_size: self.value_size,
            write_ratio: self.write_ratio,
            distribution: self.distribution,
            op_count: self.op_count,
            sessions_per_replica: self.sessions_per_replica as usize,
            mean_gap_ns: self.mean_gap_ns,
            seed,
        }
    }

    fn cluster(&self) -> ClusterConfig {
        ClusterConfig {
            overlay: self.overlay,
            net_latency_ns: self.net_latency_ns,
            net_jitter_ns: self.net_jitter_ns,
            net_header_bytes: self.net_header_bytes,
            pcie_rtt_ns: self.pcie_rtt_ns,
            replay_timeout_ns: self.replay_timeout_ns,
            cache_capacity: self.cache_capacity,
            batch_size: self.batch_size,
            flush_timer_ns: (self.flush_timer_ns > 0).then_some(self.flush_timer_ns),
            max_value_bytes: self.max_value_bytes,
            processing_delay_ns: self.processing_delay_ns,
            backend: self.backend,
            ..ClusterConfig::default()
        }
    }

    fn checker(&self) -> CheckerConfig {
        CheckerConfig {
            key_cap: self.key_cap,
            ..CheckerConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Report destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Write the client history as JSON lines.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Skip the consistency checks.
    #[arg(long)]
    no_check: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    history: PathBuf,
    #[arg(long, default_value_t = DEFAULT_KEY_CAP)]
    key_cap: usize,
    /// Print the full report, witnesses included, as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Inclusive seed range `<first>..<last>`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: (u64, u64),
    #[command(flatten)]
    exp: ExperimentArgs,
}

fn parse_seeds(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected <first>..<last>, got '{s}'"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok((a, b))
}

fn exit_for(check: Option<&CheckReport>, converged: bool) -> u8 {
    match (check.map(CheckReport::overall), converged) {
        (Some(Overall::Violation), _) | (_, false) => EXIT_VIOLATION,
        (Some(Overall::Unchecked), _) => EXIT_UNCHECKED,
        _ => EXIT_OK,
    }
}

fn print_check(report: &CheckReport) {
    println!(
        "check: {:?} ({} keys, {} ops)",
        report.overall(),
        report.keys_checked,
        report.ops_checked
    );
    for f in &report.failures {
        match &f.verdict {
            Verdict::Violation { reason, witness } => {
                println!("  violation: {reason}");
                for e in witness {
                    println!("    {}", serde_json::to_string(e).unwrap_or_default());
                }
            }
            Verdict::Unchecked { reason } => println!("  unchecked: {reason}"),
            Verdict::Ok => {}
        }
    }
    if let Verdict::Violation { reason, .. } = &report.session {
        println!("  session order: {reason}");
    }
}

fn experiment(args: &ExperimentArgs, seed: u64) -> Result<Experiment, HarnessError> {
    run_experiment(&args.workload(seed), &args.cluster(), &CrashSchedule(args.crashes.clone()))
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let e = match experiment(&args.exp, args.exp.seed) {
        Err(HarnessError::Config(err)) => {
            eprintln!("error: {err}");
            return Ok(EXIT_USAGE);
        }
        other => other?,
    };
    let m = &e.metrics;
    println!(
        "ran {} ops on {} replicas: {} events in {} ns simulated",
        m.client.ops_issued, m.replicas, m.events_dispatched, m.final_time_ns
    );
    println!(
        "network msgs {} | pcie msgs {} | reads fast/slow/blocked {}/{}/{} | replays {}",
        m.aggregate.network_messages,
        m.aggregate.pcie_messages,
        m.aggregate.fast_reads,
        m.aggregate.slow_reads,
        m.aggregate.blocked_reads,
        m.aggregate.replays
    );
    if let Some(path) = &args.out {
        emit_report(m, args.format, path)?;
        println!("report written to {}", path.display());
    }
    if let Some(path) = &args.history {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        e.history.write_jsonl(BufWriter::new(f))?;
        println!("history written to {}", path.display());
    }
    let converged = e.convergence.is_converged();
    if !converged {
        println!("replicas diverged: {:?}", e.convergence);
    }
    if args.no_check {
        return Ok(exit_for(None, converged));
    }
    let report = check_history(&e.history, &args.exp.checker());
    print_check(&report);
    Ok(exit_for(Some(&report), converged))
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let f = File::open(&args.history).with_context(|| format!("opening {}", args.history.display()))?;
    let history = History::read_jsonl(BufReader::new(f))
        .with_context(|| format!("reading {}", args.history.display()))?;
    let cfg = CheckerConfig {
        key_cap: args.key_cap,
        ..CheckerConfig::default()
    };
    let report = check_history(&history, &cfg);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_check(&report);
    }
    Ok(exit_for(Some(&report), true))
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let (first, last) = args.seeds;
    let workload = args.exp.workload(first);
    let valid = workload
        .validate()
        .and_then(|_| args.exp.cluster().validate(&workload))
        .and_then(|_| CrashSchedule(args.exp.crashes.clone()).validate(workload.replicas));
    if let Err(err) = valid {
        eprintln!("error: {err}");
        return Ok(EXIT_USAGE);
    }
    let checker = args.exp.checker();
    let results: Vec<(u64, Result<u8, String>)> = (first..=last)
        .into_par_iter()
        .map(|seed| {
            let out = experiment(&args.exp, seed).map_err(|e| e.to_string()).map(|e| {
                let report = check_history(&e.history, &checker);
                exit_for(Some(&report), e.convergence.is_converged())
            });
            (seed, out)
        })
        .collect();
    let mut worst = EXIT_OK;
    let mut passed = 0;
    for (seed, res) in &results {
        let (label, code) = match res {
            Ok(EXIT_OK) => ("ok".to_string(), EXIT_OK),
            Ok(EXIT_VIOLATION) => ("violation".to_string(), EXIT_VIOLATION),
            Ok(EXIT_UNCHECKED) => ("unchecked".to_string(), EXIT_UNCHECKED),
            Ok(other) => (format!("exit {other}"), *other),
            Err(msg) => (format!("error: {msg}"), EXIT_ERROR),
        };
        passed += usize::from(code == EXIT_OK);
        println!("seed {seed}: {label}");
        worst = match (worst, code) {
            (EXIT_VIOLATION, _) | (_, EXIT_VIOLATION) => EXIT_VIOLATION,
            (EXIT_ERROR, _) | (_, EXIT_ERROR) => EXIT_ERROR,
            (a, b) => a.max(b),
        };
    }
    println!("sweep: {passed}/{} seeds passed", results.len());
    Ok(worst)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Check(a) => cmd_check(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
