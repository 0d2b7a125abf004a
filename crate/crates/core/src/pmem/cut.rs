//! Legal crash cuts over pending write-backs.
//!
//! A selection is legal when, for every selected event `e`:
//! every earlier-epoch event of the same thread is selected, every earlier
//! event of the same thread to the same line is selected, and every event
//! that `e` causally depends on is selected.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use super::{LineAddr, PersistEvent};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CutViolation {
    #[error("event {stamp} is not pending")]
    UnknownEvent { stamp: u64 },
    #[error("epoch prefix: thread {thread} event {selected} selected but earlier-epoch event {missing} is not")]
    EpochPrefix { thread: usize, selected: u64, missing: u64 },
    #[error("line order: thread {thread} event {selected} on {line} selected but earlier event {missing} is not")]
    LineOrder {
        thread: usize,
        line: LineAddr,
        selected: u64,
        missing: u64,
    },
    #[error("causal order: event {selected} depends on event {missing} of thread {thread}, which is not selected")]
    Causal { thread: usize, selected: u64, missing: u64 },
}

/// Checks a selection against the pending logs (one slice per thread, issue order).
pub fn is_legal_cut(logs: &[&[PersistEvent]], selection: &BTreeSet<u64>) -> Result<(), CutViolation> {
    let all: BTreeSet<u64> = logs.iter().flat_map(|l| l.iter().map(|e| e.stamp)).collect();
    if let Some(&stamp) = selection.iter().find(|s| !all.contains(s)) {
        return Err(CutViolation::UnknownEvent { stamp });
    }
    for (thread, log) in logs.iter().enumerate() {
        for (i, e) in log.iter().enumerate() {
            if !selection.contains(&e.stamp) {
                continue;
            }
            for earlier in &log[..i] {
                if selection.contains(&earlier.stamp) {
                    continue;
                }
                if earlier.epoch < e.epoch {
                    return Err(CutViolation::EpochPrefix {
                        thread,
                        selected: e.stamp,
                        missing: earlier.stamp,
                    });
                }
                if earlier.line == e.line {
                    return Err(CutViolation::LineOrder {
                        thread,
                        line: e.line,
                        selected: e.stamp,
                        missing: earlier.stamp,
                    });
                }
            }
            for (x, other) in logs.iter().enumerate() {
                let bound = e.deps.get(x).copied().unwrap_or(0);
                if let Some(m) = other.iter().find(|o| o.epoch < bound && !selection.contains(&o.stamp)) {
                    return Err(CutViolation::Causal {
                        thread: x,
                        selected: e.stamp,
                        missing: m.stamp,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Selections that are legal when threads are considered in isolation.
fn thread_cuts(log: &[PersistEvent], limit: usize) -> Option<Vec<Vec<u64>>> {
    let mut out = vec![Vec::new()];
    let mut epochs: BTreeMap<u64, Vec<&PersistEvent>> = BTreeMap::new();
    for e in log {
        epochs.entry(e.epoch).or_default().push(e);
    }
    let mut full: Vec<u64> = Vec::new();
    for events in epochs.values() {
        let mut per_line: BTreeMap<LineAddr, Vec<u64>> = BTreeMap::new();
        for e in events {
            per_line.entry(e.line).or_default().push(e.stamp);
        }
        let lines: Vec<&Vec<u64>> = per_line.values().collect();
        // Mixed-radix counter over per-line prefix lengths, skipping all-zero.
        let mut lens = vec![0usize; lines.len()];
        loop {
            let mut k = 0;
            while k < lens.len() {
                if lens[k] < lines[k].len() {
                    lens[k] += 1;
                    break;
                }
                lens[k] = 0;
                k += 1;
            }
            if k == lens.len() {
                break;
            }
            let mut cut = full.clone();
            for (l, &n) in lines.iter().zip(&lens) {
                cut.extend_from_slice(&l[..n]);
            }
            out.push(cut);
            if out.len() > limit {
                return None;
            }
        }
        full.extend(events.iter().map(|e| e.stamp));
    }
    Some(out)
}

/// All legal selections, or `None` when there are more than `limit`.
pub fn enumerate_legal_cuts(logs: &[&[PersistEvent]], limit: usize) -> Option<Vec<BTreeSet<u64>>> {
    let per_thread: Vec<Vec<Vec<u64>>> = logs.iter().map(|l| thread_cuts(l, limit)).collect::<Option<_>>()?;
    let mut acc: Vec<BTreeSet<u64>> = vec![BTreeSet::new()];
    for options in &per_thread {
        let mut next = Vec::with_capacity(acc.len() * options.len());
        for base in &acc {
            for opt in options {
                let mut s = base.clone();
                s.extend(opt.iter().copied());
                next.push(s);
            }
            if next.len() > limit.saturating_mul(4) {
                return None;
            }
        }
        acc = next;
    }
    acc.retain(|s| is_legal_cut(logs, s).is_ok());
    if acc.len() > limit {
        return None;
    }
    Some(acc)
}

/// A random legal selection: per thread a random epoch frontier with random
/// per-line prefixes inside it, then closed under causal dependencies.
pub fn random_cut<R: Rng>(logs: &[&[PersistEvent]], rng: &mut R) -> BTreeSet<u64> {
    let mut sel = BTreeSet::new();
    for log in logs {
        let epochs: BTreeSet<u64> = log.iter().map(|e| e.epoch).collect();
        if epochs.is_empty() {
            continue;
        }
        let pick = rng.gen_range(0..=epochs.len());
        if pick == 0 {
            continue;
        }
        let frontier = *epochs.iter().nth(pick - 1).unwrap();
        let mut per_line: BTreeMap<LineAddr, Vec<u64>> = BTreeMap::new();
        for e in log.iter() {
            if e.epoch < frontier {
                sel.insert(e.stamp);
            } else if e.epoch == frontier {
                per_line.entry(e.line).or_default().push(e.stamp);
            }
        }
        for stamps in per_line.values() {
            let n = rng.gen_range(0..=stamps.len());
            sel.extend(stamps[..n].iter().copied());
        }
    }
    loop {
        let mut need = vec![0u64; logs.len()];
        for log in logs {
            for e in log.iter().filter(|e| sel.contains(&e.stamp)) {
                for (n, d) in need.iter_mut().zip(&e.deps) {
                    *n = (*n).max(*d);
                }
            }
        }
        let before = sel.len();
        for (x, log) in logs.iter().enumerate() {
            sel.extend(log.iter().filter(|e| e.epoch < need[x]).map(|e| e.stamp));
        }
        if sel.len() == before {
            return sel;
        }
    }
}
