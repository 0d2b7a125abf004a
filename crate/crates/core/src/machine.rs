//! Operations as resumable step machines.
//!
//! Every algorithm exposes each operation as a small state machine advanced one
//! shared-memory step at a time. The harness interleaves machines of different
//! threads and can crash between any two steps; the live driver [`execute`]
//! simply runs one machine to completion on the calling thread.

use std::fmt::Debug;
use std::hash::Hash;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::memory::{Memory, ModelMemory};
use crate::record::ARG_WORDS;

/// One invocation: operation code, argument block and the caller's sequence number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Call {
    pub func: u64,
    pub args: [u64; ARG_WORDS],
    pub seq: u64,
}

impl Call {
    pub fn new(func: u64, arg: u64, seq: u64) -> Self {
        let mut args = [0; ARG_WORDS];
        args[0] = arg;
        Call { func, args, seq }
    }

    pub fn arg(&self) -> u64 {
        self.args[0]
    }
}

/// Outcome of advancing a machine by one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Progress,
    /// Busy-waiting; nothing changed.
    Blocked,
    Done(u64),
}

/// A detectably recoverable concurrent object driven step by step.
pub trait Recoverable {
    type Machine: Clone + Eq + Hash + Debug + Send;

    fn name(&self) -> String;

    fn threads(&self) -> usize;

    /// Writes and persists the initial image.
    fn init<M: Memory>(&self, mem: &M);

    fn invoke(&self, tid: usize, call: Call) -> Self::Machine;

    /// The recovery function, called after a crash with the interrupted call.
    fn recover(&self, tid: usize, call: Call) -> Self::Machine;

    fn step<M: Memory>(&self, tid: usize, m: &mut Self::Machine, mem: &M) -> Step;

    /// False while the machine is busy-waiting on a condition that does not hold.
    fn enabled<M: Memory>(&self, _tid: usize, _m: &Self::Machine, _mem: &M) -> bool {
        true
    }

    /// Abstract object state read from the current image, for oracle comparison.
    fn dump<M: Memory>(&self, mem: &M) -> Vec<u64>;

    /// Maximum steps one operation may take, for wait-free algorithms.
    fn step_bound(&self, _recovering: bool) -> Option<usize> {
        None
    }

    /// Algorithm invariants checked by the harness after a crash and after each response.
    fn audit(&self, _mem: &ModelMemory, _after_crash: bool) -> Result<(), String> {
        Ok(())
    }

    /// Combining counters of every instance making up the object.
    fn combining(&self) -> Vec<&CombiningStats> {
        Vec::new()
    }
}

/// Runs one operation to completion on the calling thread.
pub fn execute<R: Recoverable, M: Memory>(obj: &R, tid: usize, call: Call, mem: &M) -> u64 {
    let mut m = obj.invoke(tid, call);
    drive(obj, tid, &mut m, mem)
}

/// Runs an existing machine to completion.
pub fn drive<R: Recoverable, M: Memory>(obj: &R, tid: usize, m: &mut R::Machine, mem: &M) -> u64 {
    loop {
        match obj.step(tid, m, mem) {
            Step::Done(v) => return v,
            Step::Progress => {}
            Step::Blocked => std::hint::spin_loop(),
        }
    }
}

/// Rounds/served counters maintained by combiners.
#[derive(Debug, Default)]
pub struct CombiningStats {
    rounds: AtomicU64,
    served: AtomicU64,
}

impl CombiningStats {
    pub fn record(&self, served: u64) {
        self.rounds.fetch_add(1, Ordering::Relaxed);
        self.served.fetch_add(served, Ordering::Relaxed);
    }

    pub fn rounds(&self) -> u64 {
        self.rounds.load(Ordering::Relaxed)
    }

    pub fn served(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }

    /// Average requests per round; `None` before the first round.
    pub fn degree(&self) -> Option<f64> {
        let r = self.rounds();
        (r > 0).then(|| self.served() as f64 / r as f64)
    }

    pub fn reset(&self) {
        self.rounds.store(0, Ordering::Relaxed);
        self.served.store(0, Ordering::Relaxed);
    }

    pub fn merge(&self, other: &CombiningStats) {
        self.rounds.fetch_add(other.rounds(), Ordering::Relaxed);
        self.served.fetch_add(other.served(), Ordering::Relaxed);
    }
}

/// Requests served per round over several instances.
pub fn combining_degree(stats: &[&CombiningStats]) -> Option<f64> {
    let rounds: u64 = stats.iter().map(|s| s.rounds()).sum();
    let served: u64 = stats.iter().map(|s| s.served()).sum();
    (rounds > 0).then(|| served as f64 / rounds as f64)
}

impl Clone for CombiningStats {
    fn clone(&self) -> Self {
        let c = CombiningStats::default();
        c.merge(self);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_undefined_before_first_round() {
        let s = CombiningStats::default();
        assert_eq!(s.degree(), None);
        s.record(1);
        assert_eq!(s.degree(), Some(1.0));
        s.record(3);
        assert_eq!(s.degree(), Some(2.0));
    }
}
