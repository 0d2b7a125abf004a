//! Objects whose whole state lives in the record: counter, float, heap.

use std::task::Poll;

use crate::machine::Call;
use crate::memory::Memory;
use crate::object::{ApplyCtx, SeqObject};
use crate::pmem::WordAddr;
use crate::record::{ACK, ARG_WORDS, BOT, FULL};
use crate::ConfigError;

pub const COUNTER_INC: u64 = 0;
pub const COUNTER_READ: u64 = 1;

/// Fetch-and-increment counter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counter;

impl SeqObject for Counter {
    type Local = ();

    fn name(&self) -> String {
        "counter".into()
    }

    fn state_words(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![0]
    }

    fn apply<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut (), func: u64, _: &[u64; ARG_WORDS]) -> Poll<u64> {
        let v = ctx.st(0);
        if func == COUNTER_INC {
            ctx.set_st(0, v.wrapping_add(1));
        }
        Poll::Ready(v)
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        vec![mem.peek(state)]
    }
}

pub const FLOAT_MUL: u64 = 0;

/// A float updated by multiplication; responses are the previous value's bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomicFloat {
    init: f64,
}

impl AtomicFloat {
    pub fn new(init: f64) -> Self {
        AtomicFloat { init }
    }

    pub fn mul(k: f64, seq: u64) -> Call {
        Call::new(FLOAT_MUL, k.to_bits(), seq)
    }
}

impl SeqObject for AtomicFloat {
    type Local = ();

    fn name(&self) -> String {
        "float".into()
    }

    fn state_words(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![self.init.to_bits()]
    }

    fn apply<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut (), func: u64, args: &[u64; ARG_WORDS]) -> Poll<u64> {
        let v = ctx.st(0);
        if func == FLOAT_MUL {
            ctx.set_st(0, (f64::from_bits(v) * f64::from_bits(args[0])).to_bits());
        }
        Poll::Ready(v)
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        vec![mem.peek(state)]
    }
}

pub const HEAP_INSERT: u64 = 0;
pub const HEAP_DELETE_MIN: u64 = 1;

/// Bounded binary min-heap stored as `[len, keys...]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heap {
    capacity: usize,
}

impl Heap {
    pub fn new(capacity: usize) -> Result<Self, ConfigError> {
        if capacity == 0 {
            return Err(ConfigError::Capacity(capacity));
        }
        Ok(Heap { capacity })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

impl SeqObject for Heap {
    type Local = ();

    fn name(&self) -> String {
        "heap".into()
    }

    fn state_words(&self) -> usize {
        1 + self.capacity
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![0; 1 + self.capacity]
    }

    fn apply<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut (), func: u64, args: &[u64; ARG_WORDS]) -> Poll<u64> {
        let len = ctx.st(0) as usize;
        let key = |i: usize| ctx.st(1 + i);
        let set = |i: usize, v: u64| ctx.set_st(1 + i, v);
        Poll::Ready(match func {
            HEAP_INSERT => {
                if len == self.capacity {
                    return Poll::Ready(FULL);
                }
                let mut i = len;
                let k = args[0];
                while i > 0 {
                    let parent = (i - 1) / 2;
                    let pk = key(parent);
                    if pk <= k {
                        break;
                    }
                    set(i, pk);
                    i = parent;
                }
                set(i, k);
                ctx.set_st(0, len as u64 + 1);
                ACK
            }
            HEAP_DELETE_MIN => {
                if len == 0 {
                    return Poll::Ready(BOT);
                }
                let min = key(0);
                let last = key(len - 1);
                let len = len - 1;
                let mut i = 0;
                loop {
                    let mut c = 2 * i + 1;
                    if c >= len {
                        break;
                    }
                    if c + 1 < len && key(c + 1) < key(c) {
                        c += 1;
                    }
                    let ck = key(c);
                    if ck >= last {
                        break;
                    }
                    set(i, ck);
                    i = c;
                }
                if len > 0 {
                    set(i, last);
                }
                ctx.set_st(0, len as u64);
                min
            }
            _ => BOT,
        })
    }

    /// Keys in ascending order.
    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        let len = (mem.peek(state) as usize).min(self.capacity);
        let mut keys: Vec<u64> = (0..len).map(|i| mem.peek(state.offset(1 + i))).collect();
        keys.sort_unstable();
        keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cmp::Reverse;
    use std::collections::{BTreeSet, BinaryHeap};

    use crate::memory::ModelMemory;
    use crate::pmem::LayoutBuilder;

    fn run<O: SeqObject<Local = ()>>(obj: &O, ops: &[(u64, u64)]) -> (Vec<u64>, Vec<u64>) {
        let mut b = LayoutBuilder::new();
        let r = b.persistent("st", obj.state_words().div_ceil(8));
        let mem = ModelMemory::from_layout(b.build(), 1);
        for (i, w) in obj.initial_state().iter().enumerate() {
            mem.store(0, r.word(i), *w);
        }
        let mut touched = BTreeSet::new();
        let mut ctx = ApplyCtx {
            mem: &mem,
            tid: 0,
            state: r.base(),
            touched: &mut touched,
        };
        let mut out = Vec::new();
        for &(f, a) in ops {
            let mut args = [0; ARG_WORDS];
            args[0] = a;
            match obj.apply(&mut ctx, &mut (), f, &args) {
                Poll::Ready(v) => out.push(v),
                Poll::Pending => unreachable!(),
            }
        }
        assert!(touched.is_empty());
        (out, obj.dump(&mem, r.base()))
    }

    #[test]
    fn counter_returns_previous() {
        let (out, st) = run(&Counter, &[(COUNTER_INC, 0), (COUNTER_INC, 0), (COUNTER_READ, 0)]);
        assert_eq!(out, vec![0, 1, 2]);
        assert_eq!(st, vec![2]);
    }

    #[test]
    fn heap_rejects_zero_capacity() {
        assert_eq!(Heap::new(0), Err(ConfigError::Capacity(0)));
    }

    #[test]
    fn heap_full_and_empty() {
        let h = Heap::new(2).unwrap();
        let (out, st) = run(
            &h,
            &[
                (HEAP_DELETE_MIN, 0),
                (HEAP_INSERT, 5),
                (HEAP_INSERT, 3),
                (HEAP_INSERT, 9),
                (HEAP_DELETE_MIN, 0),
            ],
        );
        assert_eq!(out, vec![BOT, ACK, ACK, FULL, 3]);
        assert_eq!(st, vec![5]);
    }

    proptest::proptest! {
        #[test]
        fn heap_matches_binary_heap(ops in proptest::collection::vec((0u64..2, 0u64..50), 0..80)) {
            let h = Heap::new(16).unwrap();
            let (out, st) = run(&h, &ops);
            let mut oracle = BinaryHeap::new();
            let mut expect = Vec::new();
            for &(f, a) in &ops {
                expect.push(if f == HEAP_INSERT {
                    if oracle.len() == 16 { FULL } else { oracle.push(Reverse(a)); ACK }
                } else {
                    oracle.pop().map_or(BOT, |Reverse(k)| k)
                });
            }
            proptest::prop_assert_eq!(out, expect);
            let mut left: Vec<u64> = oracle.into_iter().map(|Reverse(k)| k).collect();
            left.sort_unstable();
            proptest::prop_assert_eq!(st, left);
        }
    }
}
