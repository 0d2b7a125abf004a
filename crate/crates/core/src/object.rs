//! Sequential objects simulated by the combining protocols.
//!
//! An object's state is a fixed number of words inside a state record. The
//! combiner applies requests to the copy it owns; objects that also mutate
//! shared nodes (queues, stacks) report the lines they touched so the combiner
//! can write them back before persisting the record.

use std::collections::BTreeSet;
use std::fmt::Debug;
use std::hash::Hash;
use std::task::Poll;

use crate::memory::Memory;
use crate::pmem::{LineAddr, WordAddr};
use crate::record::ARG_WORDS;

/// What an object sees while the combiner serves requests.
pub struct ApplyCtx<'a, M: Memory> {
    pub mem: &'a M,
    pub tid: usize,
    /// First word of the object state inside the record being built.
    pub state: WordAddr,
    /// Lines written outside the record that must be persisted with it.
    pub touched: &'a mut BTreeSet<usize>,
}

impl<M: Memory> ApplyCtx<'_, M> {
    pub fn load(&self, addr: WordAddr) -> u64 {
        self.mem.load(self.tid, addr)
    }

    pub fn store(&self, addr: WordAddr, v: u64) {
        self.mem.store(self.tid, addr, v)
    }

    pub fn st(&self, i: usize) -> u64 {
        self.load(self.state.offset(i))
    }

    pub fn set_st(&self, i: usize, v: u64) {
        self.store(self.state.offset(i), v)
    }

    pub fn touch(&mut self, line: LineAddr) {
        self.touched.insert(line.0);
    }
}

/// A sequential object; `apply` may take several steps (returning `Pending`)
/// when it performs more than one shared access outside the record.
pub trait SeqObject {
    /// Per-request scratch state of a multi-step apply; reset between requests.
    type Local: Clone + Eq + Hash + Debug + Default + Send;

    fn name(&self) -> String;

    fn state_words(&self) -> usize;

    fn initial_state(&self) -> Vec<u64>;

    /// Writes and persists shared structure outside the record (e.g. a dummy node).
    fn init_shared<M: Memory>(&self, _mem: &M, _tid: usize) {}

    /// Runs once per combining attempt, after the state copy.
    fn begin<M: Memory>(&self, _ctx: &mut ApplyCtx<'_, M>, _local: &mut Self::Local) -> Poll<()> {
        Poll::Ready(())
    }

    fn apply<M: Memory>(
        &self,
        ctx: &mut ApplyCtx<'_, M>,
        local: &mut Self::Local,
        func: u64,
        args: &[u64; ARG_WORDS],
    ) -> Poll<u64>;

    /// Runs once after the record has been persisted, before the lock is released.
    fn end<M: Memory>(&self, _ctx: &mut ApplyCtx<'_, M>, _local: &mut Self::Local) -> Poll<()> {
        Poll::Ready(())
    }

    fn max_begin_steps(&self) -> usize {
        1
    }

    fn max_apply_steps(&self) -> usize {
        1
    }

    /// Abstract contents given the state words at `state`.
    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64>;
}
