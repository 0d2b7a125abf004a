//! Global-lock yardstick: one test-and-set lock, the operation applied in
//! place, then `pwb(state) + pwb(log) + pfence + psync` for every operation.
//!
//! This measures persistence cost only. Updates are made in place, so a crash
//! in the middle of an operation can leave a torn state.

use std::collections::BTreeSet;
use std::task::Poll;

use pcomb::pmem::{LayoutBuilder, LineAddr, Region, Site, WordAddr, WORDS_PER_LINE};
use pcomb::record::ARG_WORDS;
use pcomb::structures::{link, target, Arena, NIL, QUEUE_ENQ};
use pcomb::{ApplyCtx, Call, Memory, Recoverable, SeqObject, Step, ACK, BOT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Acquire,
    Begin,
    Apply,
    PwbState,
    PwbLog,
    Pfence,
    Psync,
    End,
    Release,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LockMachine<L> {
    call: Call,
    pc: Pc,
    ret: u64,
    local: L,
    touched: BTreeSet<usize>,
}

pub struct LockBaseline<O: SeqObject> {
    n: usize,
    object: O,
    lock: Region,
    state: Region,
    log: Region,
}

impl<O: SeqObject> LockBaseline<O> {
    pub fn new(b: &mut LayoutBuilder, n: usize, object: O) -> Self {
        LockBaseline {
            n,
            lock: b.volatile("baseline.lock", 1),
            state: b.persistent("baseline.state", object.state_words().div_ceil(WORDS_PER_LINE)),
            log: b.persistent("baseline.log", n),
            object,
        }
    }

    fn log_seq(&self, tid: usize) -> WordAddr {
        self.log.line(tid).first_word()
    }

    fn ctx<'a, M: Memory>(&self, mem: &'a M, tid: usize, touched: &'a mut BTreeSet<usize>) -> ApplyCtx<'a, M> {
        ApplyCtx {
            mem,
            tid,
            state: self.state.base(),
            touched,
        }
    }

    fn machine(&self, call: Call) -> LockMachine<O::Local> {
        LockMachine {
            call,
            pc: Pc::Acquire,
            ret: 0,
            local: O::Local::default(),
            touched: BTreeSet::new(),
        }
    }
}

impl<O: SeqObject> Recoverable for LockBaseline<O> {
    type Machine = LockMachine<O::Local>;

    fn name(&self) -> String {
        format!("lock-baseline/{}", self.object.name())
    }

    fn threads(&self) -> usize {
        self.n
    }

    fn init<M: Memory>(&self, mem: &M) {
        self.object.init_shared(mem, 0);
        for (i, w) in self.object.initial_state().into_iter().enumerate() {
            mem.store(0, self.state.base().offset(i), w);
        }
        for i in 0..self.state.lines {
            mem.pwb(0, self.state.line(i), Site::Init);
        }
        for t in 0..self.n {
            mem.pwb(0, self.log.line(t), Site::Init);
        }
        mem.psync(0, Site::Init);
    }

    fn invoke(&self, _tid: usize, call: Call) -> Self::Machine {
        self.machine(call)
    }

    fn recover(&self, _tid: usize, call: Call) -> Self::Machine {
        self.machine(call)
    }

    fn step<M: Memory>(&self, tid: usize, m: &mut Self::Machine, mem: &M) -> Step {
        match m.pc {
            Pc::Acquire => {
                let logged = mem.load(tid, self.log_seq(tid));
                if logged == m.call.seq && m.call.seq != 0 {
                    return Step::Done(mem.load(tid, self.log_seq(tid).offset(1)));
                }
                if !mem.cas(tid, self.lock.base(), 0, 1) {
                    return Step::Blocked;
                }
                m.pc = Pc::Begin;
            }
            Pc::Begin => {
                let mut ctx = self.ctx(mem, tid, &mut m.touched);
                if self.object.begin(&mut ctx, &mut m.local).is_ready() {
                    m.local = O::Local::default();
                    m.pc = Pc::Apply;
                }
            }
            Pc::Apply => {
                let mut ctx = self.ctx(mem, tid, &mut m.touched);
                if let Poll::Ready(v) = self.object.apply(&mut ctx, &mut m.local, m.call.func, &m.call.args) {
                    m.ret = v;
                    mem.store(tid, self.log_seq(tid).offset(1), v);
                    mem.store(tid, self.log_seq(tid), m.call.seq);
                    m.pc = Pc::PwbState;
                }
            }
            Pc::PwbState => {
                for i in 0..self.state.lines {
                    mem.pwb(tid, self.state.line(i), Site::BaselineState);
                }
                for &l in &m.touched {
                    mem.pwb(tid, LineAddr(l), Site::BaselineState);
                }
                m.pc = Pc::PwbLog;
            }
            Pc::PwbLog => {
                mem.pwb(tid, self.log.line(tid), Site::BaselineLog);
                m.pc = Pc::Pfence;
            }
            Pc::Pfence => {
                mem.pfence(tid, Site::BaselineFence);
                m.pc = Pc::Psync;
            }
            Pc::Psync => {
                mem.psync(tid, Site::BaselineSync);
                m.pc = Pc::End;
            }
            Pc::End => {
                let mut ctx = self.ctx(mem, tid, &mut m.touched);
                if self.object.end(&mut ctx, &mut m.local).is_ready() {
                    m.pc = Pc::Release;
                }
            }
            Pc::Release => {
                mem.store(tid, self.lock.base(), 0);
                return Step::Done(m.ret);
            }
        }
        Step::Progress
    }

    fn enabled<M: Memory>(&self, _tid: usize, m: &Self::Machine, mem: &M) -> bool {
        m.pc != Pc::Acquire || mem.peek(self.lock.base()) == 0
    }

    fn dump<M: Memory>(&self, mem: &M) -> Vec<u64> {
        self.object.dump(mem, self.state.base())
    }
}

/// Plain linked queue with head and tail in the state, for the baseline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqQueue {
    arena: Arena,
}

impl SeqQueue {
    pub fn new(b: &mut LayoutBuilder, capacity: usize) -> Self {
        SeqQueue {
            arena: Arena::new(b, "seqqueue", capacity + 1),
        }
    }
}

impl SeqObject for SeqQueue {
    type Local = ();

    fn name(&self) -> String {
        "queue".into()
    }

    fn state_words(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![link(0), link(0)]
    }

    fn init_shared<M: Memory>(&self, mem: &M, tid: usize) {
        self.arena.init(mem, tid);
    }

    fn apply<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut (), func: u64, args: &[u64; ARG_WORDS]) -> Poll<u64> {
        let head = target(ctx.st(0)).expect("queue head is never NIL");
        let tail = target(ctx.st(1)).expect("queue tail is never NIL");
        Poll::Ready(if func == QUEUE_ENQ {
            let nd = self.arena.alloc(ctx, args[0]);
            ctx.store(self.arena.next(tail), link(nd));
            ctx.touch(self.arena.line_of(tail));
            ctx.set_st(1, link(nd));
            ACK
        } else {
            match target(ctx.load(self.arena.next(head))) {
                None => BOT,
                Some(nd) => {
                    ctx.set_st(0, link(nd));
                    ctx.load(self.arena.data(nd))
                }
            }
        })
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = target(mem.peek(state)).map_or(NIL, |h| mem.peek(self.arena.next(h)));
        while let Some(t) = target(cur) {
            if out.len() > self.arena.capacity() {
                break;
            }
            out.push(mem.peek(self.arena.data(t)));
            cur = mem.peek(self.arena.next(t));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcomb::structures::{AtomicFloat, QUEUE_DEQ};
    use pcomb::{execute, ModelMemory};

    #[test]
    fn every_operation_pays_full_persistence() {
        let mut b = LayoutBuilder::new();
        let obj = LockBaseline::new(&mut b, 2, AtomicFloat::new(1.0));
        let mem = ModelMemory::from_layout(b.build(), 2);
        obj.init(&mem);
        mem.reset_stats();
        for s in 1..=5 {
            execute(&obj, (s % 2) as usize, AtomicFloat::mul(2.0, s), &mem);
        }
        let c = mem.stats().total();
        assert_eq!((c.pwb, c.pfence, c.psync), (10, 5, 5));
        assert_eq!(f64::from_bits(obj.dump(&mem)[0]), 32.0);
    }

    #[test]
    fn queue_is_fifo() {
        let mut b = LayoutBuilder::new();
        let q = SeqQueue::new(&mut b, 8);
        let obj = LockBaseline::new(&mut b, 1, q);
        let mem = ModelMemory::from_layout(b.build(), 1);
        obj.init(&mem);
        let mut seq = 0;
        let mut op = |func, arg| {
            seq += 1;
            execute(&obj, 0, Call::new(func, arg, seq), &mem)
        };
        op(QUEUE_ENQ, 4);
        op(QUEUE_ENQ, 5);
        assert_eq!(op(QUEUE_DEQ, 0), 4);
        assert_eq!(obj.dump(&mem), vec![5]);
        assert_eq!(op(QUEUE_DEQ, 0), 5);
        assert_eq!(op(QUEUE_DEQ, 0), BOT);
    }
}
