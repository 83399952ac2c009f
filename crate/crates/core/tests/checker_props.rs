//! Linearizability checker against a brute-force oracle, plus histories
//! built from known linearization points.

use proptest::prelude::*;

use nicrep::checker::{check_history, check_key_linearizable, CheckerConfig, Overall, Verdict};
use nicrep::history::{History, HistoryEvent, Op, OpResult, Stamp};
use nicrep::types::{Key, SessionId, Value};

const K: Key = Key(7);

fn v(x: u8) -> Value {
    Value::from(vec![x])
}

#[derive(Clone, Debug)]
struct RawOp {
    write: bool,
    value: u8,
    invoke: u64,
    len: u64,
    /// For writes: answered `Written`; otherwise indeterminate.
    /// For reads: `value == 0` means not-found.
    acked: bool,
}

fn raw_op() -> impl Strategy<Value = RawOp> {
    (any::<bool>(), 0u8..4, 0u64..40, 1u64..30, prop::bool::weighted(0.8)).prop_map(
        |(write, value, invoke, len, acked)| RawOp {
            write,
            value,
            invoke,
            len,
            acked,
        },
    )
}

fn event(i: usize, op: &RawOp) -> HistoryEvent {
    let key = K;
    let (op_, result, response) = if op.write {
        let result = if op.acked { OpResult::Written } else { OpResult::Superseded };
        (Op::Write { key, value: v(op.value + 1) }, result, Some(op.invoke + op.len))
    } else {
        let result = match op.value {
            0 => OpResult::NotFound,
            x => OpResult::Value { value: v(x) },
        };
        (Op::Read { key }, result, Some(op.invoke + op.len))
    };
    HistoryEvent {
        session: SessionId(i as u32),
        request: i as u64,
        op: op_,
        // distinct seq keeps every stamp unique
        invoke: Stamp { ns: op.invoke, seq: 2 * i as u64 },
        response: response.map(|ns| Stamp { ns, seq: 2 * i as u64 + 1 }),
        result,
        ts: None,
    }
}

fn effective_response(e: &HistoryEvent) -> Stamp {
    if e.is_determinate() {
        e.response.unwrap()
    } else {
        Stamp::INFINITY
    }
}

/// Tries every subset of indeterminate writes and every ordering that
/// respects real time.
fn brute_force(initial: Option<&Value>, ops: &[HistoryEvent]) -> bool {
    let optional: Vec<usize> = (0..ops.len()).filter(|&i| !ops[i].is_determinate()).collect();
    for mask in 0u32..(1 << optional.len()) {
        let chosen: Vec<usize> = (0..ops.len())
            .filter(|i| match optional.iter().position(|o| o == i) {
                Some(bit) => mask & (1 << bit) != 0,
                None => true,
            })
            .collect();
        if permute(&chosen, &mut Vec::new(), &mut vec![false; chosen.len()], ops, initial) {
            return true;
        }
    }
    false
}

fn permute(
    chosen: &[usize],
    order: &mut Vec<usize>,
    used: &mut Vec<bool>,
    ops: &[HistoryEvent],
    initial: Option<&Value>,
) -> bool {
    if order.len() == chosen.len() {
        let mut reg = initial.cloned();
        for &i in order.iter() {
            match (&ops[i].op, &ops[i].result) {
                (Op::Write { value, .. }, _) => reg = Some(value.clone()),
                (Op::Read { .. }, OpResult::Value { value }) if reg.as_ref() == Some(value) => {}
                (Op::Read { .. }, OpResult::NotFound) if reg.is_none() => {}
                _ => return false,
            }
        }
        return true;
    }
    for j in 0..chosen.len() {
        if used[j] {
            continue;
        }
        let cand = chosen[j];
        // every unplaced op that finished before cand started must go first
        let blocked = (0..chosen.len())
            .any(|k| !used[k] && k != j && effective_response(&ops[chosen[k]]) < ops[cand].invoke);
        if blocked {
            continue;
        }
        used[j] = true;
        order.push(cand);
        if permute(chosen, order, used, ops, initial) {
            return true;
        }
        order.pop();
        used[j] = false;
    }
    false
}

fn is_violation_free(v: &Verdict) -> bool {
    matches!(v, Verdict::Ok)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn agrees_with_brute_force(ops in prop::collection::vec(raw_op(), 0..7), init in prop::option::of(1u8..4)) {
        let events: Vec<HistoryEvent> = ops.iter().enumerate().map(|(i, o)| event(i, o)).collect();
        let initial = init.map(v);
        let refs: Vec<&HistoryEvent> = events.iter().collect();
        let verdict = check_key_linearizable(K, initial.as_ref(), &refs, &CheckerConfig::default());
        let expected = brute_force(initial.as_ref(), &events);
        prop_assert_eq!(is_violation_free(&verdict), expected, "{:?}", verdict);
        if let Verdict::Violation { witness, .. } = verdict {
            // the witness is itself a violation and is 1-minimal
            let w: Vec<&HistoryEvent> = witness.iter().collect();
            prop_assert!(!brute_force(initial.as_ref(), &witness));
            prop_assert!(check_key_linearizable(K, initial.as_ref(), &w, &CheckerConfig::default()).is_violation());
            for skip in 0..witness.len() {
                let rest: Vec<HistoryEvent> = witness.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, e)| e.clone()).collect();
                prop_assert!(brute_force(initial.as_ref(), &rest), "witness not minimal");
            }
        }
    }

    #[test]
    fn known_linearization_is_accepted(
        steps in prop::collection::vec((any::<bool>(), 0u64..25, 1u64..25, prop::bool::weighted(0.85)), 1..60),
    ) {
        // op i takes effect at time 100 * (i + 1); its interval straddles it
        let mut h = History::new();
        h.initial.insert(K, Some(v(0)));
        let mut reg = v(0);
        for (i, &(write, before, after, acked)) in steps.iter().enumerate() {
            let point = 100 * (i as u64 + 1);
            let (op, result) = if write {
                let value = Value::from((i as u32 + 1).to_le_bytes().to_vec());
                if acked {
                    reg = value.clone();
                    (Op::Write { key: K, value }, OpResult::Written)
                } else {
                    // indeterminate writes here never take effect
                    (Op::Write { key: K, value }, OpResult::Indeterminate)
                }
            } else {
                (Op::Read { key: K }, OpResult::Value { value: reg.clone() })
            };
            let determinate = !matches!(result, OpResult::Indeterminate);
            h.events.push(HistoryEvent {
                session: SessionId(i as u32),
                request: 0,
                op,
                invoke: Stamp { ns: point - before * 3, seq: 0 },
                response: determinate.then_some(Stamp { ns: point + after * 3, seq: 0 }),
                result,
                ts: None,
            });
        }
        let report = check_history(&h, &CheckerConfig::default());
        prop_assert_eq!(report.overall(), Overall::Ok, "{:?}", report.failures);

        // corrupting any read with a value nobody wrote is always caught
        if let Some(i) = h.events.iter().position(|e| matches!(e.op, Op::Read { .. })) {
            h.events[i].result = OpResult::Value { value: v(0xee) };
            prop_assert_eq!(check_history(&h, &CheckerConfig::default()).overall(), Overall::Violation);
        }
    }

    #[test]
    fn jsonl_round_trip(ops in prop::collection::vec(raw_op(), 0..20), init in prop::option::of(1u8..4)) {
        let mut h = History::new();
        h.initial.insert(K, init.map(v));
        h.events = ops.iter().enumerate().map(|(i, o)| event(i, o)).collect();
        let mut buf = Vec::new();
        h.write_jsonl(&mut buf).unwrap();
        let back = History::read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back, h);
    }
}
