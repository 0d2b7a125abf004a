//! Blocking combining: BCOMB without persistence, PBCOMB with it.
//!
//! Threads announce requests in `Request`; whoever acquires `Lock` becomes the
//! combiner, copies `MemState[MIndex]` into the other slot, serves every
//! announced request, persists the new record and flips `MIndex`.

use std::collections::BTreeSet;
use std::task::Poll;

use crate::machine::{Call, CombiningStats, Recoverable, Step};
use crate::memory::{Memory, ShadowEvent};
use crate::object::{ApplyCtx, SeqObject};
use crate::pmem::{LayoutBuilder, LineAddr, Region, Site, WordAddr, WORDS_PER_LINE};
use crate::record::{bit, with_bit, RequestArray, MAX_THREADS};
use crate::ConfigError;

/// Largest object state accepted, in words.
pub const MAX_STATE_WORDS: usize = 1 << 16;

/// A deliberately removed piece of the protocol, for mutation testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PbMutation {
    SkipPwbRequest,
    SkipPwbState,
    SkipPfence,
    SkipPwbIndex,
    SkipPsync,
    /// Recovery without the sequence-number check.
    SkipSeqCheck,
    /// No write-back of nodes touched outside the record.
    SkipPwbNodes,
}

impl PbMutation {
    pub const ALL: [PbMutation; 7] = [
        PbMutation::SkipPwbRequest,
        PbMutation::SkipPwbState,
        PbMutation::SkipPfence,
        PbMutation::SkipPwbIndex,
        PbMutation::SkipPsync,
        PbMutation::SkipSeqCheck,
        PbMutation::SkipPwbNodes,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PbConfig {
    pub persistence: bool,
    pub mutation: Option<PbMutation>,
    pub instance: u8,
}

impl Default for PbConfig {
    fn default() -> Self {
        PbConfig {
            persistence: true,
            mutation: None,
            instance: 0,
        }
    }
}

/// Record layout: word 0 the Deactivate bits, words `1..=n` ReturnVal, then st.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct RecordShape {
    pub n: usize,
    pub st_words: usize,
    pub header: usize,
}

impl RecordShape {
    pub fn words(&self) -> usize {
        self.header + self.n + self.st_words
    }

    pub fn lines(&self) -> usize {
        self.words().div_ceil(WORDS_PER_LINE)
    }
}

/// One PBCOMB (or BCOMB) instance.
pub struct PbComb<O: SeqObject> {
    n: usize,
    object: O,
    cfg: PbConfig,
    request: RequestArray,
    slots: [Region; 2],
    mindex: Region,
    lock: Region,
    shape: RecordShape,
    stats: CombiningStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Announce,
    ReadLock,
    TryLock,
    Wait,
    CheckServed,
    Copy,
    Begin,
    Serve,
    PersistTouched,
    PwbRequest,
    PwbState,
    Pfence,
    WriteIndex,
    PwbIndex,
    Psync,
    End,
    Unlock,
    Respond,
    RecoverSeq,
    RecoverApplied,
}

/// Per-thread progress through one PBCOMB operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PbMachine<L> {
    call: Call,
    pc: Pc,
    lval: u64,
    ind: usize,
    q: usize,
    applying: bool,
    served: u64,
    local: L,
    touched: BTreeSet<usize>,
}

impl<O: SeqObject> PbComb<O> {
    pub fn new(b: &mut LayoutBuilder, n: usize, object: O, cfg: PbConfig) -> Result<Self, ConfigError> {
        if n == 0 || n > MAX_THREADS {
            return Err(ConfigError::Threads { n, max: MAX_THREADS });
        }
        let st_words = object.state_words();
        if st_words > MAX_STATE_WORDS {
            return Err(ConfigError::StateTooLarge {
                words: st_words,
                max: MAX_STATE_WORDS,
            });
        }
        if object.initial_state().len() != st_words {
            return Err(ConfigError::InitialState {
                expected: st_words,
                got: object.initial_state().len(),
            });
        }
        let shape = RecordShape { n, st_words, header: 1 };
        let tag = cfg.instance;
        let request = RequestArray::new(b.persistent(format!("pb{tag}.request"), n));
        let slots = [
            b.persistent(format!("pb{tag}.memstate0"), shape.lines()),
            b.persistent(format!("pb{tag}.memstate1"), shape.lines()),
        ];
        let mindex = b.persistent(format!("pb{tag}.mindex"), 1);
        let lock = b.volatile(format!("pb{tag}.lock"), 1);
        Ok(PbComb {
            n,
            object,
            cfg,
            request,
            slots,
            mindex,
            lock,
            shape,
            stats: CombiningStats::default(),
        })
    }

    pub fn object(&self) -> &O {
        &self.object
    }

    pub fn config(&self) -> PbConfig {
        self.cfg
    }

    /// Bytes of one state record as laid out in memory.
    pub fn record_bytes(&self) -> usize {
        self.shape.words() * 8
    }

    /// Lines of one state record.
    pub fn record_lines(&self) -> usize {
        self.shape.lines()
    }

    pub fn mindex_addr(&self) -> WordAddr {
        self.mindex.base()
    }

    pub fn lock_addr(&self) -> WordAddr {
        self.lock.base()
    }

    fn deactivate(&self, slot: usize) -> WordAddr {
        self.slots[slot].base()
    }

    fn ret(&self, slot: usize, q: usize) -> WordAddr {
        self.slots[slot].base().offset(1 + q)
    }

    /// First object-state word of a slot.
    pub fn state_addr(&self, slot: usize) -> WordAddr {
        self.slots[slot].base().offset(1 + self.n)
    }

    /// Slot currently designated by MIndex, read without side effects.
    pub fn current_slot<M: Memory>(&self, mem: &M) -> usize {
        (mem.peek(self.mindex_addr()) & 1) as usize
    }

    fn skip(&self, m: PbMutation) -> bool {
        self.cfg.mutation == Some(m)
    }

    fn persist_on(&self) -> bool {
        self.cfg.persistence
    }

    fn ctx<'a, M: Memory>(
        &self,
        mem: &'a M,
        tid: usize,
        slot: usize,
        touched: &'a mut BTreeSet<usize>,
    ) -> ApplyCtx<'a, M> {
        ApplyCtx {
            mem,
            tid,
            state: self.state_addr(slot),
            touched,
        }
    }

    fn served<M: Memory>(&self, mem: &M, tid: usize) -> Option<u64> {
        let (_, act) = self.request.seq(mem, tid, tid);
        let cur = (mem.load(tid, self.mindex_addr()) & 1) as usize;
        let deact = bit(mem.load(tid, self.deactivate(cur)), tid);
        (act == deact).then(|| mem.load(tid, self.ret(cur, tid)))
    }

    fn respond<M: Memory>(&self, mem: &M, tid: usize) -> u64 {
        let cur = (mem.load(tid, self.mindex_addr()) & 1) as usize;
        mem.load(tid, self.ret(cur, tid))
    }

    /// Executes the current pc. `None` means the pc was a no-op under this
    /// configuration and did not consume a step.
    fn exec<M: Memory>(&self, tid: usize, m: &mut PbMachine<O::Local>, mem: &M) -> Option<Step> {
        let inst = self.cfg.instance;
        let next = |m: &mut PbMachine<O::Local>, pc| {
            m.pc = pc;
            Some(Step::Progress)
        };
        match m.pc {
            Pc::Announce => {
                self.request.announce(mem, tid, &m.call);
                next(m, Pc::ReadLock)
            }
            Pc::ReadLock => {
                m.lval = mem.load(tid, self.lock_addr());
                next(m, if m.lval % 2 == 0 { Pc::TryLock } else { Pc::Wait })
            }
            Pc::TryLock => {
                if mem.cas(tid, self.lock_addr(), m.lval, m.lval + 1) {
                    mem.shadow(tid, ShadowEvent::Acquire { instance: inst });
                    next(m, Pc::Copy)
                } else {
                    m.lval += 1;
                    next(m, Pc::Wait)
                }
            }
            Pc::Wait => {
                if mem.load(tid, self.lock_addr()) == m.lval {
                    return Some(Step::Blocked);
                }
                next(m, Pc::CheckServed)
            }
            Pc::CheckServed => match self.served(mem, tid) {
                Some(v) => Some(Step::Done(v)),
                None => next(m, Pc::ReadLock),
            },
            Pc::Copy => {
                let cur = (mem.load(tid, self.mindex_addr()) & 1) as usize;
                m.ind = 1 - cur;
                let (from, to) = (self.slots[cur].base(), self.slots[m.ind].base());
                for i in 0..self.shape.words() {
                    mem.store(tid, to.offset(i), mem.load(tid, from.offset(i)));
                }
                m.q = 0;
                m.served = 0;
                m.touched.clear();
                m.local = O::Local::default();
                next(m, Pc::Begin)
            }
            Pc::Begin => {
                let mut ctx = self.ctx(mem, tid, m.ind, &mut m.touched);
                match self.object.begin(&mut ctx, &mut m.local) {
                    Poll::Pending => Some(Step::Progress),
                    Poll::Ready(()) => {
                        m.local = O::Local::default();
                        next(m, Pc::Serve)
                    }
                }
            }
            Pc::Serve => {
                if m.q == self.n {
                    m.pc = Pc::PersistTouched;
                    return None;
                }
                let q = m.q;
                if !m.applying {
                    let (_, act) = self.request.seq(mem, tid, q);
                    let deact = bit(mem.load(tid, self.deactivate(m.ind)), q);
                    if act == deact {
                        m.q += 1;
                        return Some(Step::Progress);
                    }
                    m.applying = true;
                }
                let req = self.request.read(mem, tid, q);
                let mut ctx = self.ctx(mem, tid, m.ind, &mut m.touched);
                match self.object.apply(&mut ctx, &mut m.local, req.func, &req.args) {
                    Poll::Pending => Some(Step::Progress),
                    Poll::Ready(v) => {
                        let (seq, act) = self.request.seq(mem, tid, q);
                        mem.store(tid, self.ret(m.ind, q), v);
                        let d = mem.load(tid, self.deactivate(m.ind));
                        mem.store(tid, self.deactivate(m.ind), with_bit(d, q, act));
                        if mem.tracing() {
                            mem.shadow(
                                tid,
                                ShadowEvent::Applied {
                                    instance: inst,
                                    thread: q,
                                    seq,
                                },
                            );
                        }
                        m.applying = false;
                        m.local = O::Local::default();
                        m.served += 1;
                        m.q += 1;
                        Some(Step::Progress)
                    }
                }
            }
            Pc::PersistTouched => {
                m.pc = Pc::PwbRequest;
                if !self.persist_on() || m.touched.is_empty() || self.skip(PbMutation::SkipPwbNodes) {
                    return None;
                }
                for &l in &m.touched {
                    mem.pwb(tid, LineAddr(l), Site::Nodes);
                }
                Some(Step::Progress)
            }
            Pc::PwbRequest => {
                m.pc = Pc::PwbState;
                if !self.persist_on() || self.skip(PbMutation::SkipPwbRequest) {
                    return None;
                }
                for line in self.request.lines() {
                    mem.pwb(tid, line, Site::CombRequest);
                }
                Some(Step::Progress)
            }
            Pc::PwbState => {
                m.pc = Pc::Pfence;
                if !self.persist_on() || self.skip(PbMutation::SkipPwbState) {
                    return None;
                }
                for i in 0..self.shape.lines() {
                    mem.pwb(tid, self.slots[m.ind].line(i), Site::CombState);
                }
                Some(Step::Progress)
            }
            Pc::Pfence => {
                m.pc = Pc::WriteIndex;
                if !self.persist_on() || self.skip(PbMutation::SkipPfence) {
                    return None;
                }
                mem.pfence(tid, Site::CombFence);
                Some(Step::Progress)
            }
            Pc::WriteIndex => {
                mem.store(tid, self.mindex_addr(), m.ind as u64);
                next(m, Pc::PwbIndex)
            }
            Pc::PwbIndex => {
                m.pc = Pc::Psync;
                if !self.persist_on() || self.skip(PbMutation::SkipPwbIndex) {
                    return None;
                }
                mem.pwb(tid, self.mindex.line(0), Site::CombIndex);
                Some(Step::Progress)
            }
            Pc::Psync => {
                m.pc = Pc::End;
                if !self.persist_on() || self.skip(PbMutation::SkipPsync) {
                    return None;
                }
                mem.psync(tid, Site::CombSync);
                Some(Step::Progress)
            }
            Pc::End => {
                let mut ctx = self.ctx(mem, tid, m.ind, &mut m.touched);
                match self.object.end(&mut ctx, &mut m.local) {
                    Poll::Pending => Some(Step::Progress),
                    Poll::Ready(()) => {
                        m.local = O::Local::default();
                        next(m, Pc::Unlock)
                    }
                }
            }
            Pc::Unlock => {
                self.stats.record(m.served);
                if mem.tracing() {
                    mem.shadow(
                        tid,
                        ShadowEvent::Round {
                            instance: inst,
                            slot: m.ind as u64,
                            served: m.served,
                        },
                    );
                    mem.shadow(tid, ShadowEvent::Release { instance: inst });
                }
                mem.fetch_add(tid, self.lock_addr(), 1);
                next(m, Pc::Respond)
            }
            Pc::Respond => Some(Step::Done(self.respond(mem, tid))),
            Pc::RecoverSeq => {
                let (seq, _) = self.request.seq(mem, tid, tid);
                next(
                    m,
                    if seq != m.call.seq {
                        Pc::Announce
                    } else {
                        Pc::RecoverApplied
                    },
                )
            }
            Pc::RecoverApplied => match self.served(mem, tid) {
                Some(v) => Some(Step::Done(v)),
                None => next(m, Pc::ReadLock),
            },
        }
    }

    /// Writes the initial image of this instance (without persisting it).
    pub(crate) fn write_initial<M: Memory>(&self, mem: &M) {
        let st = self.object.initial_state();
        for (i, w) in st.iter().enumerate() {
            mem.store(0, self.state_addr(0).offset(i), *w);
        }
    }

    pub(crate) fn persist_initial<M: Memory>(&self, mem: &M) {
        for line in self.request.lines() {
            mem.pwb(0, line, Site::Init);
        }
        for s in &self.slots {
            for i in 0..s.lines {
                mem.pwb(0, s.line(i), Site::Init);
            }
        }
        mem.pwb(0, self.mindex.line(0), Site::Init);
    }
}

impl<O: SeqObject> Recoverable for PbComb<O> {
    type Machine = PbMachine<O::Local>;

    fn name(&self) -> String {
        let algo = if self.persist_on() { "pbcomb" } else { "bcomb" };
        format!("{algo}/{}", self.object.name())
    }

    fn threads(&self) -> usize {
        self.n
    }

    fn init<M: Memory>(&self, mem: &M) {
        self.write_initial(mem);
        self.object.init_shared(mem, 0);
        self.persist_initial(mem);
        mem.psync(0, Site::Init);
    }

    fn invoke(&self, _tid: usize, call: Call) -> Self::Machine {
        PbMachine {
            call,
            pc: Pc::Announce,
            lval: 0,
            ind: 0,
            q: 0,
            applying: false,
            served: 0,
            local: O::Local::default(),
            touched: BTreeSet::new(),
        }
    }

    fn recover(&self, tid: usize, call: Call) -> Self::Machine {
        let mut m = self.invoke(tid, call);
        m.pc = if self.skip(PbMutation::SkipSeqCheck) {
            Pc::RecoverApplied
        } else {
            Pc::RecoverSeq
        };
        m
    }

    fn step<M: Memory>(&self, tid: usize, m: &mut Self::Machine, mem: &M) -> Step {
        loop {
            if let Some(s) = self.exec(tid, m, mem) {
                return s;
            }
        }
    }

    fn enabled<M: Memory>(&self, _tid: usize, m: &Self::Machine, mem: &M) -> bool {
        m.pc != Pc::Wait || mem.peek(self.lock_addr()) != m.lval
    }

    fn dump<M: Memory>(&self, mem: &M) -> Vec<u64> {
        self.object.dump(mem, self.state_addr(self.current_slot(mem)))
    }

    fn combining(&self) -> Vec<&CombiningStats> {
        vec![&self.stats]
    }
}
