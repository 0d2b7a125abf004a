//! Straight-line sequential specifications.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

use pcomb::record::ARG_WORDS;

const EMPTY: u64 = u64::MAX;
const FULL: u64 = u64::MAX - 1;
const ACK: u64 = 0;

pub trait Oracle {
    type State: Clone + Eq + Hash + Debug;

    fn name(&self) -> &'static str;

    fn initial(&self) -> Self::State;

    fn apply(&self, st: &mut Self::State, op: u64, args: &[u64; ARG_WORDS]) -> u64;

    /// Abstract contents in the order the structures report them.
    fn view(&self, st: &Self::State) -> Vec<u64>;
}

/// Fetch-and-increment (op 0) and read (op 1).
#[derive(Clone, Copy, Debug, Default)]
pub struct CounterOracle;

impl Oracle for CounterOracle {
    type State = u64;

    fn name(&self) -> &'static str {
        "counter"
    }

    fn initial(&self) -> u64 {
        0
    }

    fn apply(&self, st: &mut u64, op: u64, _: &[u64; ARG_WORDS]) -> u64 {
        let old = *st;
        if op == 0 {
            *st += 1;
        }
        old
    }

    fn view(&self, st: &u64) -> Vec<u64> {
        vec![*st]
    }
}

/// Multiply (op 0) by the float in the first argument; returns the old bits.
#[derive(Clone, Copy, Debug)]
pub struct FloatOracle {
    pub init: f64,
}

impl Oracle for FloatOracle {
    type State = u64;

    fn name(&self) -> &'static str {
        "float"
    }

    fn initial(&self) -> u64 {
        self.init.to_bits()
    }

    fn apply(&self, st: &mut u64, op: u64, args: &[u64; ARG_WORDS]) -> u64 {
        let old = *st;
        if op == 0 {
            let x = f64::from_bits(old) * f64::from_bits(args[0]);
            *st = x.to_bits();
        }
        old
    }

    fn view(&self, st: &u64) -> Vec<u64> {
        vec![*st]
    }
}

/// Enqueue (op 0) / dequeue (op 1).
#[derive(Clone, Copy, Debug, Default)]
pub struct QueueOracle;

impl Oracle for QueueOracle {
    type State = VecDeque<u64>;

    fn name(&self) -> &'static str {
        "queue"
    }

    fn initial(&self) -> VecDeque<u64> {
        VecDeque::new()
    }

    fn apply(&self, st: &mut VecDeque<u64>, op: u64, args: &[u64; ARG_WORDS]) -> u64 {
        if op == 0 {
            st.push_back(args[0]);
            ACK
        } else {
            st.pop_front().unwrap_or(EMPTY)
        }
    }

    fn view(&self, st: &VecDeque<u64>) -> Vec<u64> {
        st.iter().copied().collect()
    }
}

/// Push (op 0) / pop (op 1); viewed top first.
#[derive(Clone, Copy, Debug, Default)]
pub struct StackOracle;

impl Oracle for StackOracle {
    type State = Vec<u64>;

    fn name(&self) -> &'static str {
        "stack"
    }

    fn initial(&self) -> Vec<u64> {
        Vec::new()
    }

    fn apply(&self, st: &mut Vec<u64>, op: u64, args: &[u64; ARG_WORDS]) -> u64 {
        if op == 0 {
            st.push(args[0]);
            ACK
        } else {
            st.pop().unwrap_or(EMPTY)
        }
    }

    fn view(&self, st: &Vec<u64>) -> Vec<u64> {
        st.iter().rev().copied().collect()
    }
}

/// Bounded priority queue: insert (op 0) / delete-min (op 1); a multiset of keys.
#[derive(Clone, Copy, Debug)]
pub struct HeapOracle {
    pub capacity: usize,
}

impl Oracle for HeapOracle {
    type State = BTreeMap<u64, usize>;

    fn name(&self) -> &'static str {
        "heap"
    }

    fn initial(&self) -> Self::State {
        BTreeMap::new()
    }

    fn apply(&self, st: &mut Self::State, op: u64, args: &[u64; ARG_WORDS]) -> u64 {
        if op == 0 {
            if st.values().sum::<usize>() >= self.capacity {
                return FULL;
            }
            *st.entry(args[0]).or_insert(0) += 1;
            ACK
        } else {
            let Some((&k, _)) = st.iter().next() else {
                return EMPTY;
            };
            let c = st.get_mut(&k).expect("present");
            *c -= 1;
            if *c == 0 {
                st.remove(&k);
            }
            k
        }
    }

    fn view(&self, st: &Self::State) -> Vec<u64> {
        st.iter().flat_map(|(&k, &c)| std::iter::repeat_n(k, c)).collect()
    }
}
