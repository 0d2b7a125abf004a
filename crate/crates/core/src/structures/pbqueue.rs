//! Queue from two blocking combining instances sharing a linked list.
//!
//! The enqueue instance's state is the tail, the dequeue instance's the head.
//! While an enqueue round is open, `oldTail` holds the tail it started from so
//! dequeuers do not follow links that are not yet persisted.

use std::task::Poll;

use crate::memory::{Memory, ShadowEvent};
use crate::object::{ApplyCtx, SeqObject};
use crate::pbcomb::{PbComb, PbConfig};
use crate::pmem::{LayoutBuilder, WordAddr};
use crate::record::{ACK, ARG_WORDS, BOT};
use crate::ConfigError;

use super::arena::{link, target, Arena, NIL};
use super::dual_recoverable;

/// Volatile words shared by both sides.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Shared {
    old_tail: WordAddr,
    /// Zero after a crash until an enqueue round has rewritten the tail's link.
    settled: WordAddr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbQueueEnq {
    arena: Arena,
    shared: Shared,
}

impl SeqObject for PbQueueEnq {
    type Local = ();

    fn name(&self) -> String {
        "queue.enq".into()
    }

    fn state_words(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![link(0)]
    }

    fn init_shared<M: Memory>(&self, mem: &M, tid: usize) {
        self.arena.init(mem, tid);
    }

    fn begin<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut ()) -> Poll<()> {
        ctx.store(self.shared.old_tail, ctx.st(0));
        Poll::Ready(())
    }

    fn apply<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut (), _: u64, args: &[u64; ARG_WORDS]) -> Poll<u64> {
        let tail = target(ctx.st(0)).expect("queue tail is never NIL");
        let nd = self.arena.alloc(ctx, args[0]);
        ctx.store(self.arena.next(tail), link(nd));
        ctx.touch(self.arena.line_of(tail));
        ctx.set_st(0, link(nd));
        ctx.store(self.shared.settled, 1);
        Poll::Ready(ACK)
    }

    fn end<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut ()) -> Poll<()> {
        ctx.store(self.shared.old_tail, NIL);
        Poll::Ready(())
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        vec![mem.peek(state)]
    }
}

/// Where the dequeue side finds the enqueue side's current tail.
#[derive(Clone, Debug, PartialEq, Eq)]
struct EnqView {
    mindex: WordAddr,
    state: [WordAddr; 2],
}

impl EnqView {
    fn tail<M: Memory>(&self, mem: &M, tid: usize) -> u64 {
        let slot = (mem.load(tid, self.mindex) & 1) as usize;
        mem.load(tid, self.state[slot])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DeqLocal {
    read_next: bool,
    next: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbQueueDeq {
    arena: Arena,
    shared: Shared,
    enq: EnqView,
    guard: bool,
    instance: u8,
}

impl PbQueueDeq {
    fn take<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, next: u64) -> u64 {
        let Some(nd) = target(next) else {
            return BOT;
        };
        let v = ctx.load(self.arena.data(nd));
        ctx.set_st(0, next);
        if ctx.mem.tracing() {
            ctx.mem.shadow(
                ctx.tid,
                ShadowEvent::Handout {
                    instance: self.instance,
                    data: self.arena.data(nd),
                    value: v,
                },
            );
        }
        v
    }
}

impl SeqObject for PbQueueDeq {
    type Local = DeqLocal;

    fn name(&self) -> String {
        "queue.deq".into()
    }

    fn state_words(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![link(0)]
    }

    fn apply<M: Memory>(
        &self,
        ctx: &mut ApplyCtx<'_, M>,
        local: &mut DeqLocal,
        _: u64,
        _: &[u64; ARG_WORDS],
    ) -> Poll<u64> {
        let head = target(ctx.st(0)).expect("queue head is never NIL");
        if !local.read_next {
            if ctx.load(self.shared.settled) == 0 {
                let et = self.enq.tail(ctx.mem, ctx.tid);
                if target(et) == Some(head) {
                    return Poll::Ready(BOT);
                }
                let next = ctx.load(self.arena.next(head));
                return Poll::Ready(self.take(ctx, next));
            }
            local.next = ctx.load(self.arena.next(head));
            local.read_next = true;
            return Poll::Pending;
        }
        let old_tail = ctx.load(self.shared.old_tail);
        if self.guard && target(old_tail) == Some(head) {
            return Poll::Ready(BOT);
        }
        Poll::Ready(self.take(ctx, local.next))
    }

    fn max_apply_steps(&self) -> usize {
        2
    }

    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        vec![mem.peek(state)]
    }
}

/// Blocking recoverable FIFO queue.
pub struct PbQueue {
    pub enq: PbComb<PbQueueEnq>,
    pub deq: PbComb<PbQueueDeq>,
    arena: Arena,
}

impl PbQueue {
    /// `guard` disables the in-flight-tail check when false (mutation testing).
    pub fn new(
        b: &mut LayoutBuilder,
        n: usize,
        capacity: usize,
        cfg: PbConfig,
        guard: bool,
    ) -> Result<Self, ConfigError> {
        let arena = Arena::new(b, "pbqueue", capacity + 1);
        let vol = b.volatile("pbqueue.shared", 1);
        let shared = Shared {
            old_tail: vol.word(0),
            settled: vol.word(1),
        };
        let enq = PbComb::new(
            b,
            n,
            PbQueueEnq {
                arena: arena.clone(),
                shared: shared.clone(),
            },
            PbConfig { instance: 0, ..cfg },
        )?;
        let view = EnqView {
            mindex: enq.mindex_addr(),
            state: [enq.state_addr(0), enq.state_addr(1)],
        };
        let deq = PbComb::new(
            b,
            n,
            PbQueueDeq {
                arena: arena.clone(),
                shared,
                enq: view,
                guard,
                instance: 1,
            },
            PbConfig { instance: 1, ..cfg },
        )?;
        Ok(PbQueue { enq, deq, arena })
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    /// Values from head to tail.
    pub fn contents<M: Memory>(&self, mem: &M) -> Vec<u64> {
        let head = mem.peek(self.deq.state_addr(self.deq.current_slot(mem)));
        let tail = mem.peek(self.enq.state_addr(self.enq.current_slot(mem)));
        let mut out = Vec::new();
        let mut cur = head;
        while cur != tail && out.len() <= self.arena.capacity() {
            let Some(t) = target(cur) else { break };
            cur = mem.peek(self.arena.next(t));
            match target(cur) {
                Some(nd) => out.push(mem.peek(self.arena.data(nd))),
                None => break,
            }
        }
        out
    }
}

dual_recoverable!(PbQueue, "pbcomb", PbComb<PbQueueEnq>, PbComb<PbQueueDeq>);
