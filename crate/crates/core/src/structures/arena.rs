//! Node pool for linked structures.
//!
//! A node is two words, `(data, next)`, so four share a cache line. Links are
//! encoded as `(index + 1) << 1 | mark` with 0 as NIL. Nodes are never
//! reclaimed; the pool panics when exhausted.

use crate::memory::Memory;
use crate::object::ApplyCtx;
use crate::pmem::{LayoutBuilder, LineAddr, Region, Site, WordAddr, WORDS_PER_LINE};

pub const NIL: u64 = 0;
const NODE_WORDS: usize = 2;

pub fn link(idx: usize) -> u64 {
    ((idx as u64) + 1) << 1
}

pub fn marked(idx: usize) -> u64 {
    link(idx) | 1
}

pub fn is_marked(l: u64) -> bool {
    l & 1 == 1
}

pub fn unmark(l: u64) -> u64 {
    l & !1
}

/// Index a link designates, ignoring its mark.
pub fn target(l: u64) -> Option<usize> {
    let l = unmark(l);
    (l != NIL).then(|| ((l >> 1) - 1) as usize)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arena {
    bump: Region,
    nodes: Region,
    capacity: usize,
}

impl Arena {
    /// `capacity` nodes, the first of which is reserved as a sentinel.
    pub fn new(b: &mut LayoutBuilder, name: &str, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let per_line = WORDS_PER_LINE / NODE_WORDS;
        Arena {
            bump: b.persistent(format!("{name}.bump"), 1),
            nodes: b.persistent(format!("{name}.nodes"), capacity.div_ceil(per_line)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn data(&self, idx: usize) -> WordAddr {
        self.nodes.base().offset(idx * NODE_WORDS)
    }

    pub fn next(&self, idx: usize) -> WordAddr {
        self.data(idx).offset(1)
    }

    pub fn line_of(&self, idx: usize) -> LineAddr {
        self.data(idx).line()
    }

    pub fn bump_line(&self) -> LineAddr {
        self.bump.line(0)
    }

    /// Reserves node 0 and writes back the pool header.
    pub fn init<M: Memory>(&self, mem: &M, tid: usize) {
        mem.store(tid, self.bump.base(), 1);
        mem.pwb(tid, self.bump_line(), Site::Init);
        mem.pwb(tid, self.line_of(0), Site::Init);
    }

    /// Allocates a node holding `data` with a NIL next, marking its line and
    /// the allocation cursor as touched.
    pub fn alloc<M: Memory>(&self, ctx: &mut ApplyCtx<'_, M>, data: u64) -> usize {
        let idx = ctx.mem.fetch_add(ctx.tid, self.bump.base(), 1) as usize;
        assert!(idx < self.capacity, "node pool exhausted ({} nodes)", self.capacity);
        ctx.store(self.data(idx), data);
        ctx.store(self.next(idx), NIL);
        ctx.touch(self.line_of(idx));
        ctx.touch(self.bump_line());
        idx
    }

    /// Nodes handed out so far, sentinel included.
    pub fn allocated<M: Memory>(&self, mem: &M) -> usize {
        mem.peek(self.bump.base()) as usize
    }
}
