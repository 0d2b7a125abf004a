//! Linked stack whose top pointer lives in the record.
//!
//! Pushed nodes are immutable, so the same object works under both combining
//! protocols: a failed wait-free attempt only leaks the nodes it allocated.

use std::task::Poll;

use crate::memory::Memory;
use crate::object::{ApplyCtx, SeqObject};
use crate::pmem::{LayoutBuilder, WordAddr};
use crate::record::{ACK, ARG_WORDS, BOT};

use super::arena::{link, target, Arena, NIL};

pub const STACK_PUSH: u64 = 0;
pub const STACK_POP: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stack {
    arena: Arena,
}

impl Stack {
    pub fn new(b: &mut LayoutBuilder, name: &str, capacity: usize) -> Self {
        Stack {
            arena: Arena::new(b, name, capacity + 1),
        }
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }
}

impl SeqObject for Stack {
    type Local = ();

    fn name(&self) -> String {
        "stack".into()
    }

    fn state_words(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<u64> {
        vec![NIL]
    }

    fn init_shared<M: Memory>(&self, mem: &M, tid: usize) {
        self.arena.init(mem, tid);
    }

    fn apply<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, _: &mut (), func: u64, args: &[u64; ARG_WORDS]) -> Poll<u64> {
        let top = ctx.st(0);
        Poll::Ready(match func {
            STACK_PUSH => {
                let nd = self.arena.alloc(ctx, args[0]);
                ctx.store(self.arena.next(nd), top);
                ctx.set_st(0, link(nd));
                ACK
            }
            _ => match target(top) {
                None => BOT,
                Some(t) => {
                    let v = ctx.load(self.arena.data(t));
                    ctx.set_st(0, ctx.load(self.arena.next(t)));
                    v
                }
            },
        })
    }

    /// Values from top to bottom.
    fn dump<M: Memory>(&self, mem: &M, state: WordAddr) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = mem.peek(state);
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
