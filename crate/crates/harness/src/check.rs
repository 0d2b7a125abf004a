//! Linearizability and detectable-recoverability checkers.
//!
//! Both reduce a history to operations with real-time intervals and search
//! for a sequential witness in the style of Wing and Gong, memoising on the set
//! of linearized operations and the oracle state.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pcomb::record::ARG_WORDS;

use crate::history::{EventKind, History};
use crate::oracle::Oracle;

/// Largest history the exhaustive linearizability check accepts.
pub const MAX_CHECK_OPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpId {
    pub thread: usize,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Op {
    pub id: OpId,
    pub func: u64,
    pub args: [u64; ARG_WORDS],
    pub invoked: usize,
    /// `(event index, value)` of the final response, if any.
    pub response: Option<(usize, u64)>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("{ops} operations exceed the {max}-operation limit of the exhaustive check; use randomized mode")]
    TooLarge { ops: usize, max: usize },
    #[error("history contains crashes; use the detectable check")]
    HasCrash,
    #[error("malformed history: {0}")]
    Malformed(String),
}

/// Outcome of a check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// Violated property on failure.
    pub property: Option<String>,
    pub message: String,
    /// Sequential witness on success.
    pub witness: Vec<OpId>,
    /// The history checked (kept on failure).
    pub history: Option<History>,
    /// How to re-run the execution that produced the history.
    pub replay: Option<serde_json::Value>,
    /// Persistence events relevant to the failure.
    pub pmem_log: Vec<String>,
}

impl Verdict {
    pub fn pass(witness: Vec<OpId>) -> Self {
        Verdict {
            pass: true,
            message: "ok".into(),
            witness,
            ..Verdict::default()
        }
    }

    pub fn fail(property: &str, message: impl Into<String>, history: &History) -> Self {
        Verdict {
            pass: false,
            property: Some(property.into()),
            message: message.into(),
            history: Some(history.clone()),
            ..Verdict::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdicts serialize")
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pass {
            write!(f, "PASS ({} ops linearized)", self.witness.len())
        } else {
            writeln!(
                f,
                "FAIL [{}]: {}",
                self.property.as_deref().unwrap_or("?"),
                self.message
            )?;
            if let Some(h) = &self.history {
                write!(f, "{h}")?;
            }
            for l in &self.pmem_log {
                writeln!(f, "  {l}")?;
            }
            Ok(())
        }
    }
}

/// Operations of a history, with intervals merged across crashes.
pub fn operations(history: &History) -> Result<Vec<Op>, CheckError> {
    let mut ops: BTreeMap<OpId, Op> = BTreeMap::new();
    let mut open: BTreeMap<usize, OpId> = BTreeMap::new();
    for (i, e) in history.events.iter().enumerate() {
        let bad = |m: &str| CheckError::Malformed(format!("event {i}: {m}"));
        match e.kind {
            EventKind::Crash => {}
            EventKind::Invoke => {
                let t = e.thread.ok_or_else(|| bad("invoke without thread"))?;
                let id = OpId {
                    thread: t,
                    seq: e.seq.ok_or_else(|| bad("invoke without seq"))?,
                };
                if open.contains_key(&t) {
                    return Err(bad("invoke while an operation is open"));
                }
                if ops.contains_key(&id) {
                    return Err(bad("sequence number reused"));
                }
                ops.insert(
                    id,
                    Op {
                        id,
                        func: e.op.ok_or_else(|| bad("invoke without op"))?,
                        args: e.args.unwrap_or_default(),
                        invoked: i,
                        response: None,
                    },
                );
                open.insert(t, id);
            }
            EventKind::RecoverInvoke => {
                let t = e.thread.ok_or_else(|| bad("recover without thread"))?;
                let id = open.get(&t).copied().ok_or_else(|| bad("recover with nothing open"))?;
                let op = &ops[&id];
                if e.seq != Some(id.seq) || e.op != Some(op.func) || e.args != Some(op.args) {
                    return Err(bad("recovery not invoked with the original arguments"));
                }
            }
            EventKind::Respond | EventKind::RecoverRespond => {
                let t = e.thread.ok_or_else(|| bad("response without thread"))?;
                let id = open.remove(&t).ok_or_else(|| bad("response with nothing open"))?;
                let v = e.value.ok_or_else(|| bad("response without value"))?;
                ops.get_mut(&id).expect("open op exists").response = Some((i, v));
            }
        }
    }
    Ok(ops.into_values().collect())
}

/// Searches for a sequential witness. Completed operations must all appear
/// with matching responses; pending ones may be included or left out. With
/// `final_view`, the witness must also end in that abstract state.
fn search<O: Oracle>(ops: &[Op], oracle: &O, final_view: Option<&[u64]>) -> Option<Vec<usize>> {
    let n = ops.len();
    assert!(n <= 64, "search supports at most 64 operations");
    let complete: u64 = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.response.is_some())
        .fold(0, |m, (i, _)| m | 1 << i);
    let mut seen: HashSet<(u64, O::State)> = HashSet::new();
    let mut path = Vec::new();

    fn rec<O: Oracle>(
        ops: &[Op],
        oracle: &O,
        final_view: Option<&[u64]>,
        complete: u64,
        done: u64,
        st: O::State,
        seen: &mut HashSet<(u64, O::State)>,
        path: &mut Vec<usize>,
    ) -> bool {
        if done & complete == complete && final_view.is_none_or(|v| oracle.view(&st) == v) {
            return true;
        }
        if !seen.insert((done, st.clone())) {
            return false;
        }
        // Earliest response among operations not yet linearized.
        let horizon = ops
            .iter()
            .enumerate()
            .filter(|(i, _)| done & (1 << i) == 0)
            .filter_map(|(_, o)| o.response.map(|r| r.0))
            .min()
            .unwrap_or(usize::MAX);
        for (i, op) in ops.iter().enumerate() {
            if done & (1 << i) != 0 || op.invoked > horizon {
                continue;
            }
            let mut next = st.clone();
            let v = oracle.apply(&mut next, op.func, &op.args);
            if op.response.is_some_and(|(_, r)| r != v) {
                continue;
            }
            path.push(i);
            if rec(ops, oracle, final_view, complete, done | 1 << i, next, seen, path) {
                return true;
            }
            path.pop();
        }
        false
    }

    rec(
        ops,
        oracle,
        final_view,
        complete,
        0,
        oracle.initial(),
        &mut seen,
        &mut path,
    )
    .then_some(path)
}

/// Wing–Gong check of a crash-free history.
pub fn check_linearizable<O: Oracle>(history: &History, oracle: &O) -> Result<Verdict, CheckError> {
    if history.crashes() > 0 {
        return Err(CheckError::HasCrash);
    }
    let ops = operations(history)?;
    if ops.len() > MAX_CHECK_OPS {
        return Err(CheckError::TooLarge {
            ops: ops.len(),
            max: MAX_CHECK_OPS,
        });
    }
    Ok(match search(&ops, oracle, None) {
        Some(w) => Verdict::pass(w.into_iter().map(|i| ops[i].id).collect()),
        None => Verdict::fail(
            "linearizability",
            format!("no sequential {} history explains the responses", oracle.name()),
            history,
        ),
    })
}

/// Durable linearizability with detectability: every operation that responded
/// (directly or through recovery) appears exactly once with its response, in an
/// order consistent with real time. `final_view`, when given, must be the
/// abstract state the witness ends in.
pub fn check_detectable<O: Oracle>(history: &History, oracle: &O, final_view: Option<&[u64]>) -> Verdict {
    let ops = match operations(history) {
        Ok(o) => o,
        Err(e) => return Verdict::fail("well-formedness", e.to_string(), history),
    };
    if ops.len() > 64 {
        return Verdict::fail(
            "size",
            format!("{} operations exceed the checker's 64", ops.len()),
            history,
        );
    }
    match search(&ops, oracle, final_view) {
        Some(w) => Verdict::pass(w.into_iter().map(|i| ops[i].id).collect()),
        None => {
            let mut v = Verdict::fail(
                "detectable-recoverability",
                format!(
                    "no sequential {} history applies each responded operation exactly once{}",
                    oracle.name(),
                    if final_view.is_some() {
                        " and reaches the recovered state"
                    } else {
                        ""
                    }
                ),
                history,
            );
            if let Some(fv) = final_view {
                v.message.push_str(&format!(" (recovered state {fv:?})"));
            }
            v
        }
    }
}
