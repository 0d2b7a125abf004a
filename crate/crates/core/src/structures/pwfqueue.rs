//! Queue from two wait-free combining instances sharing a linked list.
//!
//! An enqueue attempt builds a private chain and records where it must be
//! attached (`oldTail`, `lhead`). The chain is connected after the attempt's
//! record is installed, by the next enqueue combiner or by a dequeue combiner
//! that finds the list empty while serving a request. A connection is first
//! written marked; readers of a marked link persist it with their own round.

use std::sync::OnceLock;
use std::task::Poll;

use crate::memory::Memory;
use crate::object::{ApplyCtx, SeqObject};
use crate::pmem::{LayoutBuilder, Site, WordAddr};
use crate::pwfcomb::{unpack_ref, PwfComb, PwfConfig, PwfGeometry};
use crate::record::{ACK, ARG_WORDS, BOT};
use crate::ConfigError;

use super::arena::{is_marked, link, marked, target, unmark, Arena, NIL};
use super::dual_recoverable;

const TAIL: usize = 0;
const OLD_TAIL: usize = 1;
const LHEAD: usize = 2;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConnectLocal {
    phase: u8,
    s: u64,
    old_tail: u64,
    lhead: u64,
    flush: u64,
}

#[derive(Debug)]
pub struct PwfQueueEnq {
    arena: Arena,
    es: OnceLock<PwfGeometry>,
    link_pwb: bool,
}

impl SeqObject for PwfQueueEnq {
    type Local = ConnectLocal;

    fn name(&self) -> String {
        "queue.enq".into()
    }

    fn state_words(&self) -> usize {
        3
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![link(0), NIL, NIL]
    }

    fn init_shared<M: Memory>(&self, mem: &M, tid: usize) {
        self.arena.init(mem, tid);
    }

    /// Connects the chain of the attempt this record was copied from.
    fn begin<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, l: &mut ConnectLocal) -> Poll<()> {
        let ot = ctx.st(OLD_TAIL);
        let Some(t) = target(ot) else {
            return Poll::Ready(());
        };
        let lhead = ctx.st(LHEAD);
        let next = self.arena.next(t);
        match l.phase {
            0 => {
                let es = self.es.get().expect("queue geometry set at construction");
                es.persist_if_unflushed(ctx.mem, ctx.tid);
            }
            1 => {
                ctx.mem.cas(
                    ctx.tid,
                    next,
                    NIL,
                    marked(target(lhead).expect("lhead set with oldTail")),
                );
            }
            2 => {
                if ctx.load(next) != NIL && self.link_pwb {
                    ctx.mem.pwb(ctx.tid, self.arena.line_of(t), Site::Link);
                }
            }
            _ => {
                let nd = target(lhead).expect("lhead set with oldTail");
                ctx.mem.cas(ctx.tid, next, marked(nd), link(nd));
                ctx.set_st(OLD_TAIL, NIL);
                ctx.set_st(LHEAD, NIL);
                return Poll::Ready(());
            }
        }
        l.phase += 1;
        Poll::Pending
    }

    fn max_begin_steps(&self) -> usize {
        4
    }

    fn apply<M: Memory>(
        &self,
        ctx: &mut ApplyCtx<'_, M>,
        _: &mut ConnectLocal,
        _: u64,
        args: &[u64; ARG_WORDS],
    ) -> Poll<u64> {
        let nd = self.arena.alloc(ctx, args[0]);
        let tail = ctx.st(TAIL);
        if ctx.st(OLD_TAIL) == NIL {
            ctx.set_st(OLD_TAIL, tail);
            ctx.set_st(LHEAD, link(nd));
        } else {
            let t = target(tail).expect("queue tail is never NIL");
            ctx.store(self.arena.next(t), link(nd));
            ctx.touch(self.arena.line_of(t));
        }
        ctx.set_st(TAIL, link(nd));
        Poll::Ready(ACK)
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        (0..3).map(|i| mem.peek(state.offset(i))).collect()
    }
}

#[derive(Debug)]
pub struct PwfQueueDeq {
    arena: Arena,
    es: PwfGeometry,
}

impl SeqObject for PwfQueueDeq {
    type Local = ConnectLocal;

    fn name(&self) -> String {
        "queue.deq".into()
    }

    fn state_words(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![link(0)]
    }

    /// Dequeues from the head; when the list looks empty, first connects the
    /// most recently installed enqueue chain if nobody has yet.
    fn apply<M: Memory>(
        &self,
        ctx: &mut ApplyCtx<'_, M>,
        l: &mut ConnectLocal,
        _: u64,
        _: &[u64; ARG_WORDS],
    ) -> Poll<u64> {
        let es = &self.es;
        let head = target(ctx.st(0)).expect("queue head is never NIL");
        match l.phase {
            0 | 5 => {
                let next = ctx.load(self.arena.next(head));
                let Some(nd) = target(next) else {
                    if l.phase == 5 {
                        return Poll::Ready(BOT);
                    }
                    l.phase = 1;
                    return Poll::Pending;
                };
                if is_marked(next) {
                    ctx.touch(self.arena.line_of(head));
                }
                ctx.set_st(0, unmark(next));
                return Poll::Ready(ctx.load(self.arena.data(nd)));
            }
            1 => {
                l.s = ctx.load(es.s_addr());
                let (h, _) = unpack_ref(l.s);
                l.old_tail = ctx.load(es.state(h).offset(OLD_TAIL));
                l.lhead = ctx.load(es.state(h).offset(LHEAD));
                l.flush = ctx.load(es.flush(h));
                l.phase = 2;
            }
            2 => {
                let unlinked = target(l.old_tail).is_some_and(|t| ctx.load(self.arena.next(t)) == NIL);
                l.phase = if unlinked && ctx.load(es.s_addr()) == l.s { 3 } else { 5 };
            }
            3 => {
                if l.flush % 2 == 1 {
                    ctx.mem.pwb(ctx.tid, es.s_line(), Site::ConnectPwbS);
                    ctx.mem.psync(ctx.tid, Site::ConnectSync);
                }
                l.phase = 4;
            }
            _ => {
                let (t, nd) = (target(l.old_tail), target(l.lhead));
                if let (Some(t), Some(nd)) = (t, nd) {
                    ctx.mem.cas(ctx.tid, self.arena.next(t), NIL, marked(nd));
                }
                l.phase = 5;
            }
        }
        Poll::Pending
    }

    fn max_apply_steps(&self) -> usize {
        6
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        vec![mem.peek(state)]
    }
}

/// Wait-free recoverable FIFO queue.
pub struct PwfQueue {
    pub enq: PwfComb<PwfQueueEnq>,
    pub deq: PwfComb<PwfQueueDeq>,
    arena: Arena,
}

impl PwfQueue {
    /// `link_pwb` false drops the write-back of connection links (mutation testing).
    pub fn new(
        b: &mut LayoutBuilder,
        n: usize,
        capacity: usize,
        cfg: PwfConfig,
        link_pwb: bool,
    ) -> Result<Self, ConfigError> {
        let arena = Arena::new(b, "pwfqueue", capacity + 1);
        let enq = PwfComb::new(
            b,
            n,
            PwfQueueEnq {
                arena: arena.clone(),
                es: OnceLock::new(),
                link_pwb,
            },
            PwfConfig { instance: 0, ..cfg },
        )?;
        enq.object().es.set(enq.geometry().clone()).expect("geometry set once");
        let deq = PwfComb::new(
            b,
            n,
            PwfQueueDeq {
                arena: arena.clone(),
                es: enq.geometry().clone(),
            },
            PwfConfig { instance: 1, ..cfg },
        )?;
        Ok(PwfQueue { enq, deq, arena })
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    /// Values from head to tail, following an unconnected chain if one is pending.
    pub fn contents<M: Memory>(&self, mem: &M) -> Vec<u64> {
        let es = self.enq.geometry();
        let ds = self.deq.geometry();
        let est = es.state(es.current(mem));
        let (tail, old_tail, lhead) = (
            mem.peek(est),
            mem.peek(est.offset(OLD_TAIL)),
            mem.peek(est.offset(LHEAD)),
        );
        let mut cur = unmark(mem.peek(ds.state(ds.current(mem))));
        let mut out = Vec::new();
        while cur != tail && out.len() <= self.arena.capacity() {
            let Some(t) = target(cur) else { break };
            let mut next = unmark(mem.peek(self.arena.next(t)));
            if next == NIL && cur == old_tail {
                next = lhead;
            }
            let Some(nd) = target(next) else { break };
            out.push(mem.peek(self.arena.data(nd)));
            cur = next;
        }
        out
    }

    /// Links still marked outside the pending connection point.
    pub fn stray_marks<M: Memory>(&self, mem: &M) -> Vec<usize> {
        let es = self.enq.geometry();
        let old_tail = target(mem.peek(es.state(es.current(mem)).offset(OLD_TAIL)));
        (0..self.arena.allocated(mem).min(self.arena.capacity()))
            .filter(|&i| is_marked(mem.peek(self.arena.next(i))) && Some(i) != old_tail)
            .collect()
    }
}

dual_recoverable!(PwfQueue, "pwfcomb", PwfComb<PwfQueueEnq>, PwfComb<PwfQueueDeq>);
