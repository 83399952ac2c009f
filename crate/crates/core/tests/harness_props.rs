//! Whole-cluster properties over small random configurations.

use proptest::prelude::*;

use nicrep::checker::{check_history, CheckerConfig, Overall};
use nicrep::harness::{generate_trace, run_experiment, ClusterConfig, CrashSchedule, WorkloadConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn protocol_messages_follow_closed_form(n in 1usize..8, ops in 50u64..400, seed in any::<u64>()) {
        // sparse keys: no two writes contend, so each costs one Inv, Ack and
        // Commit per peer
        let w = WorkloadConfig { replicas: n, key_count: 1_000_000, op_count: ops, seed, ..WorkloadConfig::default() };
        let e = run_experiment(&w, &ClusterConfig::default(), &CrashSchedule::none()).unwrap();
        let a = &e.metrics.aggregate;
        prop_assert_eq!(a.writes_superseded + a.replays, 0);
        let writes = (0.2 * ops as f64).round() as u64;
        prop_assert_eq!(a.writes_committed, writes);
        prop_assert_eq!(a.network_messages, 3 * (n as u64 - 1) * writes);
        prop_assert_eq!(a.commits_applied, n as u64 * writes);
        prop_assert_eq!(e.metrics.client.reads_completed, ops - writes);
    }

    #[test]
    fn contended_runs_stay_linearizable(
        n in 2usize..6,
        keys in 1u64..6,
        ratio in 0.0f64..=1.0,
        gap in 0u64..4_000,
        jitter in 0u64..5_000,
        fifo in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let w = WorkloadConfig {
            replicas: n,
            key_count: keys,
            op_count: 300,
            write_ratio: ratio,
            mean_gap_ns: gap,
            seed,
            ..WorkloadConfig::default()
        };
        let c = ClusterConfig { net_jitter_ns: jitter, net_fifo: fifo, cache_capacity: 2, batch_size: 3, ..ClusterConfig::default() };
        let e = run_experiment(&w, &c, &CrashSchedule::none()).unwrap();
        prop_assert!(e.convergence.is_converged(), "{:?}", e.convergence);
        prop_assert_eq!(e.metrics.client.unanswered, 0);
        let report = check_history(&e.history, &CheckerConfig { key_cap: 400, ..CheckerConfig::default() });
        prop_assert_eq!(report.overall(), Overall::Ok, "{:?}", report.failures);
    }

    #[test]
    fn trace_shape(ops in 0u64..2_000, ratio in 0.0f64..=1.0, n in 1usize..6, spr in 1usize..4, seed in any::<u64>()) {
        let w = WorkloadConfig { replicas: n, op_count: ops, write_ratio: ratio, sessions_per_replica: spr, seed, key_count: 50, ..WorkloadConfig::default() };
        let t = generate_trace(&w).unwrap();
        prop_assert_eq!(t.op_count() as u64, ops);
        prop_assert_eq!(t.write_count() as u64, (ratio * ops as f64).round() as u64);
        prop_assert_eq!(t.sessions.len(), n * spr);
        for s in &t.sessions {
            prop_assert_eq!(s.home.index(), s.session.0 as usize % n);
            prop_assert!(s.ops.windows(2).all(|p| p[0].issue_at <= p[1].issue_at));
            prop_assert!(s.ops.iter().all(|o| o.op.key().0 < 50));
        }
        prop_assert_eq!(generate_trace(&w).unwrap(), t);
    }
}
