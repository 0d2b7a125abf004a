//! Announce-array encoding and response constants.
//!
//! A request occupies one cache line: `[func, args[0..6], seq << 1 | activate]`.

use crate::machine::Call;
use crate::memory::Memory;
use crate::pmem::{LineAddr, Region, WordAddr};

/// Argument words per request.
pub const ARG_WORDS: usize = 6;
/// Empty response.
pub const BOT: u64 = u64::MAX;
/// Bounded-capacity object is full.
pub const FULL: u64 = u64::MAX - 1;
/// Acknowledgement response.
pub const ACK: u64 = 0;
/// Maximum threads: deactivate and index bits are packed into one word.
pub const MAX_THREADS: usize = 64;

pub fn pack_seq(seq: u64, activate: u64) -> u64 {
    (seq << 1) | (activate & 1)
}

pub fn unpack_seq(word: u64) -> (u64, u64) {
    (word >> 1, word & 1)
}

pub fn bit(mask: u64, q: usize) -> u64 {
    (mask >> q) & 1
}

pub fn with_bit(mask: u64, q: usize, v: u64) -> u64 {
    (mask & !(1 << q)) | ((v & 1) << q)
}

/// `Request[0..n]`, one line each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestArray {
    region: Region,
}

impl RequestArray {
    pub fn new(region: Region) -> Self {
        RequestArray { region }
    }

    pub fn line(&self, q: usize) -> LineAddr {
        self.region.line(q)
    }

    pub fn lines(&self) -> impl Iterator<Item = LineAddr> + '_ {
        (0..self.region.lines).map(|q| self.region.line(q))
    }

    fn word(&self, q: usize, i: usize) -> WordAddr {
        self.line(q).first_word().offset(i)
    }

    pub fn seq_word(&self, q: usize) -> WordAddr {
        self.word(q, 1 + ARG_WORDS)
    }

    /// Writes func and args, then the seq/activate word with the activate bit toggled.
    pub fn announce<M: Memory>(&self, mem: &M, p: usize, call: &Call) {
        let (_, act) = unpack_seq(mem.load(p, self.seq_word(p)));
        mem.store(p, self.word(p, 0), call.func);
        for (i, a) in call.args.iter().enumerate() {
            mem.store(p, self.word(p, 1 + i), *a);
        }
        mem.store(p, self.seq_word(p), pack_seq(call.seq, 1 - act));
    }

    /// `(seq, activate)` of `q`'s request.
    pub fn seq<M: Memory>(&self, mem: &M, tid: usize, q: usize) -> (u64, u64) {
        unpack_seq(mem.load(tid, self.seq_word(q)))
    }

    pub fn read<M: Memory>(&self, mem: &M, tid: usize, q: usize) -> Call {
        let func = mem.load(tid, self.word(q, 0));
        let mut args = [0; ARG_WORDS];
        for (i, a) in args.iter_mut().enumerate() {
            *a = mem.load(tid, self.word(q, 1 + i));
        }
        let (seq, _) = self.seq(mem, tid, q);
        Call { func, args, seq }
    }
}
