//! Standard workloads and target builders for the test suites.

use pcomb::pmem::LayoutBuilder;
use pcomb::structures::{
    AtomicFloat, Counter, Heap, PbQueue, PwfQueue, Stack, COUNTER_INC, FLOAT_MUL, HEAP_DELETE_MIN, HEAP_INSERT,
    QUEUE_DEQ, QUEUE_ENQ, STACK_POP, STACK_PUSH,
};
use pcomb::{PbComb, PbConfig, PwfComb, PwfConfig, SeqObject};

use crate::world::Target;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Counter,
    Float,
    Queue,
    Stack,
    Heap,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Counter, Kind::Float, Kind::Queue, Kind::Stack, Kind::Heap];
}

/// Initial value of float workloads.
pub const FLOAT_INIT: f64 = 1.0;
/// Capacity of heap workloads.
pub const HEAP_CAPACITY: usize = 4;

const MULTIPLIERS: [f64; 4] = [2.0, 3.0, 0.5, 5.0];

/// Per-thread operations. Container workloads alternate insertions and
/// removals, with odd threads starting with a removal.
pub fn ops(kind: Kind, threads: usize, per_thread: usize) -> Vec<Vec<(u64, u64)>> {
    (0..threads)
        .map(|t| {
            (0..per_thread)
                .map(|i| {
                    let insert = (t + i) % 2 == 0;
                    match kind {
                        Kind::Counter => (COUNTER_INC, 0),
                        Kind::Float => (FLOAT_MUL, MULTIPLIERS[(t + 2 * i) % MULTIPLIERS.len()].to_bits()),
                        Kind::Queue => {
                            if insert {
                                (QUEUE_ENQ, 10 * (t as u64 + 1) + i as u64)
                            } else {
                                (QUEUE_DEQ, 0)
                            }
                        }
                        Kind::Stack => {
                            if insert {
                                (STACK_PUSH, 10 * (t as u64 + 1) + i as u64)
                            } else {
                                (STACK_POP, 0)
                            }
                        }
                        Kind::Heap => {
                            if insert {
                                (HEAP_INSERT, ((7 * t + 3 * i) % 10 + 1) as u64)
                            } else {
                                (HEAP_DELETE_MIN, 0)
                            }
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Node capacity generous enough for every failed wait-free attempt.
pub fn node_capacity(ops: &[Vec<(u64, u64)>]) -> usize {
    let total: usize = ops.iter().map(Vec::len).sum();
    (total + 1) * ops.len().max(1) * 8
}

pub fn pb_target<O: SeqObject>(
    n: usize,
    make: impl FnOnce(&mut LayoutBuilder) -> O,
    cfg: PbConfig,
    ops: Vec<Vec<(u64, u64)>>,
) -> Target<PbComb<O>> {
    let mut b = LayoutBuilder::new();
    let obj = make(&mut b);
    let pb = PbComb::new(&mut b, n, obj, cfg).expect("valid configuration");
    Target::new(pb, b.build(), ops)
}

pub fn pwf_target<O: SeqObject>(
    n: usize,
    make: impl FnOnce(&mut LayoutBuilder) -> O,
    cfg: PwfConfig,
    ops: Vec<Vec<(u64, u64)>>,
) -> Target<PwfComb<O>> {
    let mut b = LayoutBuilder::new();
    let obj = make(&mut b);
    let pwf = PwfComb::new(&mut b, n, obj, cfg).expect("valid configuration");
    Target::new(pwf, b.build(), ops)
}

pub fn pbqueue_target(n: usize, cfg: PbConfig, guard: bool, ops: Vec<Vec<(u64, u64)>>) -> Target<PbQueue> {
    let mut b = LayoutBuilder::new();
    let q = PbQueue::new(&mut b, n, node_capacity(&ops), cfg, guard).expect("valid configuration");
    Target::new(q, b.build(), ops)
}

pub fn pwfqueue_target(n: usize, cfg: PwfConfig, link_pwb: bool, ops: Vec<Vec<(u64, u64)>>) -> Target<PwfQueue> {
    let mut b = LayoutBuilder::new();
    let q = PwfQueue::new(&mut b, n, node_capacity(&ops), cfg, link_pwb).expect("valid configuration");
    Target::new(q, b.build(), ops)
}

pub fn counter(_: &mut LayoutBuilder) -> Counter {
    Counter
}

pub fn float(_: &mut LayoutBuilder) -> AtomicFloat {
    AtomicFloat::new(FLOAT_INIT)
}

pub fn heap(_: &mut LayoutBuilder) -> Heap {
    Heap::new(HEAP_CAPACITY).expect("positive capacity")
}

/// A stack sized for `ops`.
pub fn stack(ops: &[Vec<(u64, u64)>]) -> impl FnOnce(&mut LayoutBuilder) -> Stack + '_ {
    move |b| Stack::new(b, "stack", node_capacity(ops))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_shapes() {
        let q = ops(Kind::Queue, 2, 2);
        assert_eq!(q[0], vec![(QUEUE_ENQ, 10), (QUEUE_DEQ, 0)]);
        assert_eq!(q[1], vec![(QUEUE_DEQ, 0), (QUEUE_ENQ, 21)]);
        assert!(ops(Kind::Counter, 3, 4).iter().all(|t| t.len() == 4));
    }
}
