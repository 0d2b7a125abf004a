//! Sequential objects and the combined data structures built from them.

mod arena;
mod pbqueue;
mod pwfqueue;
mod simple;
mod stack;

pub use arena::{is_marked, link, marked, target, unmark, Arena, NIL};
pub use pbqueue::{PbQueue, PbQueueDeq, PbQueueEnq};
pub use pwfqueue::{PwfQueue, PwfQueueDeq, PwfQueueEnq};
pub use simple::{AtomicFloat, Counter, Heap, COUNTER_INC, COUNTER_READ, FLOAT_MUL, HEAP_DELETE_MIN, HEAP_INSERT};
pub use stack::{Stack, STACK_POP, STACK_PUSH};

use crate::pbcomb::PbComb;
use crate::pwfcomb::PwfComb;

pub const QUEUE_ENQ: u64 = 0;
pub const QUEUE_DEQ: u64 = 1;

pub type PbStack = PbComb<Stack>;
pub type PbHeap = PbComb<Heap>;
pub type PwfStack = PwfComb<Stack>;

/// Machine of a structure made of an enqueue-side and a dequeue-side instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Dual<E, D> {
    Enq(E),
    Deq(D),
}

/// Implements `Recoverable` for a queue whose `enq`/`deq` fields are instances.
macro_rules! dual_recoverable {
    ($ty:ty, $name:literal, $e:ty, $d:ty) => {
        impl $crate::machine::Recoverable for $ty {
            type Machine = $crate::structures::Dual<
                <$e as $crate::machine::Recoverable>::Machine,
                <$d as $crate::machine::Recoverable>::Machine,
            >;

            fn name(&self) -> String {
                format!("{}/queue", $name)
            }

            fn threads(&self) -> usize {
                self.enq.threads()
            }

            fn init<M: $crate::memory::Memory>(&self, mem: &M) {
                self.enq.init(mem);
                self.deq.init(mem);
            }

            fn invoke(&self, tid: usize, call: $crate::machine::Call) -> Self::Machine {
                if call.func == $crate::structures::QUEUE_ENQ {
                    $crate::structures::Dual::Enq(self.enq.invoke(tid, call))
                } else {
                    $crate::structures::Dual::Deq(self.deq.invoke(tid, call))
                }
            }

            fn recover(&self, tid: usize, call: $crate::machine::Call) -> Self::Machine {
                if call.func == $crate::structures::QUEUE_ENQ {
                    $crate::structures::Dual::Enq(self.enq.recover(tid, call))
                } else {
                    $crate::structures::Dual::Deq(self.deq.recover(tid, call))
                }
            }

            fn step<M: $crate::memory::Memory>(
                &self,
                tid: usize,
                m: &mut Self::Machine,
                mem: &M,
            ) -> $crate::machine::Step {
                match m {
                    $crate::structures::Dual::Enq(x) => self.enq.step(tid, x, mem),
                    $crate::structures::Dual::Deq(x) => self.deq.step(tid, x, mem),
                }
            }

            fn enabled<M: $crate::memory::Memory>(&self, tid: usize, m: &Self::Machine, mem: &M) -> bool {
                match m {
                    $crate::structures::Dual::Enq(x) => self.enq.enabled(tid, x, mem),
                    $crate::structures::Dual::Deq(x) => self.deq.enabled(tid, x, mem),
                }
            }

            fn dump<M: $crate::memory::Memory>(&self, mem: &M) -> Vec<u64> {
                self.contents(mem)
            }

            fn step_bound(&self, recovering: bool) -> Option<usize> {
                Some(self.enq.step_bound(recovering)?.max(self.deq.step_bound(recovering)?))
            }

            fn audit(&self, mem: &$crate::memory::ModelMemory, after_crash: bool) -> Result<(), String> {
                self.enq.audit(mem, after_crash)?;
                self.deq.audit(mem, after_crash)
            }

            fn combining(&self) -> Vec<&$crate::machine::CombiningStats> {
                let mut v = self.enq.combining();
                v.extend(self.deq.combining());
                v
            }
        }
    };
}

pub(crate) use dual_recoverable;
