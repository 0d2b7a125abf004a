//! Hand-scripted executions that random and enumerated schedules are unlikely
//! to hit.

use pcomb::structures::{NIL, QUEUE_DEQ, QUEUE_ENQ};
use pcomb::{Memory, PbConfig, Recoverable};

use crate::check::{check_detectable, Verdict};
use crate::oracle::QueueOracle;
use crate::workload::pbqueue_target;
use crate::world::{Selector, Stepped, World};

/// Outcome of [`queue_guard`].
#[derive(Clone, Debug)]
pub struct GuardOutcome {
    /// Value returned by the second dequeue before the crash.
    pub early_deq: u64,
    pub verdict: Verdict,
}

fn finish_op<R: Recoverable>(w: &mut World<'_, R>, t: usize) -> u64 {
    loop {
        match w.step(t) {
            Stepped::Responded(v) => return v,
            Stepped::Progress => {}
            Stepped::Skipped => panic!("thread {t} has no operation to finish"),
        }
    }
}

/// A dequeuer observes a link installed by an enqueue round whose state has
/// not yet persisted, then the machine crashes right after that round wrote
/// back its nodes.
///
/// Thread 0 enqueues 1, 2, 3 and thread 1 dequeues twice. After `enq(1)` and
/// the first dequeue complete, thread 0 runs until node 1 links to node 2;
/// thread 1 then completes its second dequeue. Thread 0 continues until it
/// has issued the write-back of node 1, everything written back so far
/// persists, and both threads run to completion.
/// Without the `oldTail` guard the second dequeue hands out 2 from a round
/// that recovery discards.
pub fn queue_guard(guard: bool) -> GuardOutcome {
    let ops = vec![
        vec![(QUEUE_ENQ, 1), (QUEUE_ENQ, 2), (QUEUE_ENQ, 3)],
        vec![(QUEUE_DEQ, 0), (QUEUE_DEQ, 0)],
    ];
    let target = pbqueue_target(2, PbConfig::default(), guard, ops);
    let mut w = World::new(&target);
    finish_op(&mut w, 0);
    finish_op(&mut w, 1);
    let arena = target.obj.arena().clone();
    while w.mem.peek(arena.next(1)) == NIL {
        if let Stepped::Responded(_) = w.step(0) {
            panic!("enq(2) finished before linking");
        }
    }
    let early_deq = finish_op(&mut w, 1);
    let node_line = arena.line_of(1);
    while !w.mem.with_pmem(|p| p.pending_of(0).iter().any(|e| e.line == node_line)) {
        if let Stepped::Responded(_) = w.step(0) {
            panic!("enq(2) finished before writing back its nodes");
        }
    }
    w.crash(&Selector::All).expect("crash");
    while !w.done() {
        for t in w.enabled_threads() {
            w.step(t);
        }
    }
    let view = w.view();
    GuardOutcome {
        early_deq,
        verdict: check_detectable(&w.history, &QueueOracle, Some(&view)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_decides_the_outcome() {
        let off = queue_guard(false);
        assert_eq!(off.early_deq, 2);
        assert!(!off.verdict.pass, "{}", off.verdict);
        let on = queue_guard(true);
        assert!(on.verdict.pass, "{}", on.verdict);
    }
}
