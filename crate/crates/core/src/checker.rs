//! Offline consistency checks over recorded client histories.
//!
//! Per-key linearizability uses a Wing-Gong style search: repeatedly pick an
//! operation that no pending operation is required to precede, apply it to a
//! single-register model and backtrack on mismatch. Visited
//! `(linearized set, register value)` pairs are memoized.
//!
//! Writes that were superseded or never answered are indeterminate: they are
//! given an infinite response time and may be linearized anywhere after
//! their invocation, or not at all.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::history::{History, HistoryEvent, Op, OpResult, Stamp};
use crate::types::{Key, SessionId, Value};

pub const DEFAULT_KEY_CAP: usize = 200;
pub const DEFAULT_SEARCH_BUDGET: u64 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerConfig {
    /// Histories with more checkable ops per key are reported unchecked.
    pub key_cap: usize,
    /// Search states explored per key before giving up as unchecked.
    pub search_budget: u64,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            key_cap: DEFAULT_KEY_CAP,
            search_budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    Violation {
        reason: String,
        witness: Vec<HistoryEvent>,
    },
    Unchecked {
        reason: String,
    },
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug)]
struct Prepared {
    kind: Kind,
    val: u32,
    invoke: Stamp,
    response: Stamp,
    required: bool,
}

/// Interns register values; id 0 is "absent".
#[derive(Default)]
struct Values(HashMap<Option<Value>, u32>);

impl Values {
    fn id(&mut self, v: Option<&Value>) -> u32 {
        let n = self.0.len() as u32;
        *self.0.entry(v.cloned()).or_insert(n)
    }
}

fn checkable(e: &HistoryEvent) -> bool {
    match e.result {
        OpResult::Rejected => false,
        OpResult::Superseded | OpResult::Indeterminate => e.op.is_write(),
        _ => e.response.is_some(),
    }
}

fn prepare(initial: Option<&Value>, ops: &[&HistoryEvent]) -> (u32, Vec<Prepared>) {
    let mut values = Values::default();
    let init = values.id(initial);
    let prepared = ops
        .iter()
        .map(|e| {
            let required = e.is_determinate();
            let response = if required {
                e.response.expect("determinate op has a response")
            } else {
                Stamp::INFINITY
            };
            let (kind, val) = match (&e.op, &e.result) {
                (Op::Write { value, .. }, _) => (Kind::Write, values.id(Some(value))),
                (Op::Read { .. }, OpResult::Value { value }) => (Kind::Read, values.id(Some(value))),
                (Op::Read { .. }, _) => (Kind::Read, values.id(None)),
            };
            Prepared {
                kind,
                val,
                invoke: e.invoke,
                response,
                required,
            }
        })
        .collect();
    (init, prepared)
}

enum Search {
    Found,
    Exhausted,
    OutOfBudget,
}

struct Searcher<'a> {
    ops: &'a [Prepared],
    done: Vec<u64>,
    visited: HashSet<(Vec<u64>, u32)>,
    budget: u64,
}

impl Searcher<'_> {
    fn is_done(&self, i: usize) -> bool {
        self.done[i / 64] & (1 << (i % 64)) != 0
    }

    fn flip(&mut self, i: usize) {
        self.done[i / 64] ^= 1 << (i % 64);
    }

    fn run(&mut self, state: u32, required_left: usize) -> Search {
        if required_left == 0 {
            return Search::Found;
        }
        if self.budget == 0 {
            return Search::OutOfBudget;
        }
        self.budget -= 1;
        if !self.visited.insert((self.done.clone(), state)) {
            return Search::Exhausted;
        }
        let n = self.ops.len();
        let horizon = (0..n)
            .filter(|&i| !self.is_done(i))
            .map(|i| self.ops[i].response)
            .min()
            .unwrap_or(Stamp::INFINITY);
        let enabled: Vec<usize> = (0..n)
            .filter(|&i| !self.is_done(i) && self.ops[i].invoke < horizon)
            .collect();

        // A read that matches the register can always go first without
        // losing any solution, so take it and skip branching.
        if let Some(&r) = enabled
            .iter()
            .find(|&&i| self.ops[i].kind == Kind::Read && self.ops[i].val == state)
        {
            self.flip(r);
            let res = self.run(state, required_left - usize::from(self.ops[r].required));
            self.flip(r);
            return res;
        }
        for i in enabled {
            let op = self.ops[i];
            if op.kind != Kind::Write {
                continue;
            }
            self.flip(i);
            let res = self.run(op.val, required_left - usize::from(op.required));
            self.flip(i);
            match res {
                Search::Exhausted => {}
                other => return other,
            }
        }
        Search::Exhausted
    }
}

fn search(initial: Option<&Value>, ops: &[&HistoryEvent], budget: u64) -> Search {
    let (init, prepared) = prepare(initial, ops);
    let required = prepared.iter().filter(|p| p.required).count();
    let mut s = Searcher {
        ops: &prepared,
        done: vec![0; prepared.len().div_ceil(64).max(1)],
        visited: HashSet::new(),
        budget,
    };
    s.run(init, required)
}

/// Decides whether the operations on one key admit a linearization.
/// `ops` must all target `key`; operations that cannot constrain the result
/// (rejected writes, reads without a response) are ignored.
pub fn check_key_linearizable(
    key: Key,
    initial: Option<&Value>,
    ops: &[&HistoryEvent],
    cfg: &CheckerConfig,
) -> Verdict {
    debug_assert!(ops.iter().all(|e| e.key() == key));
    let mut ops: Vec<&HistoryEvent> = ops.iter().copied().filter(|e| checkable(e)).collect();
    ops.sort_by_key(|e| e.invoke);
    if ops.len() > cfg.key_cap {
        return Verdict::Unchecked {
            reason: format!("{key}: {} ops exceeds cap of {}", ops.len(), cfg.key_cap),
        };
    }
    match search(initial, &ops, cfg.search_budget) {
        Search::Found => Verdict::Ok,
        Search::OutOfBudget => Verdict::Unchecked {
            reason: format!("{key}: search budget of {} states exhausted", cfg.search_budget),
        },
        Search::Exhausted => Verdict::Violation {
            reason: format!("{key}: no linearization exists"),
            witness: shrink(initial, ops, cfg.search_budget),
        },
    }
}

/// Drops operations one at a time while the remainder still has no
/// linearization, leaving a minimal failing subset.
fn shrink(initial: Option<&Value>, mut ops: Vec<&HistoryEvent>, budget: u64) -> Vec<HistoryEvent> {
    let mut i = 0;
    while i < ops.len() {
        let mut trial = ops.clone();
        trial.remove(i);
        if matches!(search(initial, &trial, budget), Search::Exhausted) {
            ops = trial;
        } else {
            i += 1;
        }
    }
    ops.into_iter().cloned().collect()
}

/// Read-your-writes within each session: after a session's write to a key
/// is acknowledged, its later reads of that key must not return a value
/// that was definitely overwritten before that write began (including the
/// initial value).
pub fn check_session_order(history: &History) -> Verdict {
    // value -> latest response among the writes that produced it
    let mut produced: HashMap<(Key, Option<&Value>), Stamp> = HashMap::new();
    for e in &history.events {
        if let (Op::Write { key, value }, false) = (&e.op, matches!(e.result, OpResult::Rejected)) {
            let resp = if e.is_determinate() {
                e.response.expect("determinate")
            } else {
                Stamp::INFINITY
            };
            let slot = produced.entry((*key, Some(value))).or_insert(resp);
            *slot = (*slot).max(resp);
        }
    }
    let mut sessions: BTreeMap<SessionId, Vec<&HistoryEvent>> = BTreeMap::new();
    for e in &history.events {
        sessions.entry(e.session).or_default().push(e);
    }
    for ops in sessions.values_mut() {
        ops.sort_by_key(|e| e.invoke);
        let mut own: HashMap<Key, &HistoryEvent> = HashMap::new();
        for e in ops.iter() {
            match (&e.op, &e.result) {
                (Op::Write { key, .. }, OpResult::Written) => {
                    own.insert(*key, e);
                }
                (Op::Read { key }, OpResult::Value { .. } | OpResult::NotFound) => {
                    let Some(w) = own.get(key) else { continue };
                    let Op::Write { value: mine, .. } = &w.op else { unreachable!() };
                    let got = match &e.result {
                        OpResult::Value { value } => Some(value),
                        _ => None,
                    };
                    if got == Some(mine) {
                        continue;
                    }
                    let initial = history.initial_value(*key);
                    let stale = if got == initial {
                        true
                    } else {
                        produced
                            .get(&(*key, got))
                            .is_some_and(|resp| *resp < w.invoke)
                    };
                    if stale {
                        return Verdict::Violation {
                            reason: format!(
                                "session {} read a value of {key} older than its own write",
                                e.session.0
                            ),
                            witness: vec![(*w).clone(), (*e).clone()],
                        };
                    }
                }
                _ => {}
            }
        }
    }
    Verdict::Ok
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyVerdict {
    pub key: Key,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub keys_checked: usize,
    pub ops_checked: usize,
    /// Keys whose verdict is not `Ok`, ascending.
    pub failures: Vec<KeyVerdict>,
    pub session: Verdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overall {
    Ok,
    Violation,
    Unchecked,
}

impl CheckReport {
    pub fn overall(&self) -> Overall {
        let verdicts = self.failures.iter().map(|f| &f.verdict).chain([&self.session]);
        let mut out = Overall::Ok;
        for v in verdicts {
            match v {
                Verdict::Violation { .. } => return Overall::Violation,
                Verdict::Unchecked { .. } => out = Overall::Unchecked,
                Verdict::Ok => {}
            }
        }
        out
    }

    pub fn is_ok(&self) -> bool {
        self.overall() == Overall::Ok
    }
}

/// Runs every check over a whole history.
pub fn check_history(history: &History, cfg: &CheckerConfig) -> CheckReport {
    let mut failures = Vec::new();
    let by_key = history.by_key();
    let mut ops_checked = 0;
    for (key, ops) in &by_key {
        ops_checked += ops.len();
        let verdict = check_key_linearizable(*key, history.initial_value(*key), ops, cfg);
        if !verdict.is_ok() {
            failures.push(KeyVerdict { key: *key, verdict });
        }
    }
    CheckReport {
        keys_checked: by_key.len(),
        ops_checked,
        failures,
        session: check_session_order(history),
    }
}
