//! Wait-free recoverable combining (PWFCOMB).
//!
//! Every thread acts as a combiner on one of its two private records, then
//! tries to swing the shared pointer `S` to it. LL/SC on `S` is emulated with
//! a version-stamped CAS: the word packs `version << 16 | handle`. A record's
//! `flush` counter is odd while the `S` value installing it may be unpersisted.

use std::collections::BTreeSet;
use std::task::Poll;

use crate::machine::{Call, CombiningStats, Recoverable, Step};
use crate::memory::{Memory, ModelMemory, ShadowEvent};
use crate::object::{ApplyCtx, SeqObject};
use crate::pbcomb::MAX_STATE_WORDS;
use crate::pmem::{LayoutBuilder, LineAddr, Region, Site, WordAddr, WORDS_PER_LINE};
use crate::record::{bit, with_bit, RequestArray, MAX_THREADS};
use crate::ConfigError;

/// Combining attempts before taking the help path.
pub const ATTEMPTS: u8 = 2;

const HANDLE_BITS: u32 = 16;
const HANDLE_MASK: u64 = (1 << HANDLE_BITS) - 1;

/// `(handle, version)` packed into one word.
pub fn pack_ref(handle: usize, version: u64) -> u64 {
    (version << HANDLE_BITS) | handle as u64
}

pub fn unpack_ref(word: u64) -> (usize, u64) {
    ((word & HANDLE_MASK) as usize, word >> HANDLE_BITS)
}

/// A deliberately removed piece of the protocol, for mutation testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PwfMutation {
    SkipPwbRequest,
    SkipPwbRecord,
    SkipPfence,
    /// Neither the winner nor a helper writes back S.
    SkipPwbS,
    /// Neither the winner nor a helper issues the psync after pwb(S).
    SkipPsync,
    /// No flush counter handshake: flush never goes odd, helpers never persist S.
    SkipFlush,
    SkipPwbNodes,
}

impl PwfMutation {
    pub const ALL: [PwfMutation; 7] = [
        PwfMutation::SkipPwbRequest,
        PwfMutation::SkipPwbRecord,
        PwfMutation::SkipPfence,
        PwfMutation::SkipPwbS,
        PwfMutation::SkipPsync,
        PwfMutation::SkipFlush,
        PwfMutation::SkipPwbNodes,
    ];
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PwfConfig {
    pub mutation: Option<PwfMutation>,
    pub instance: u8,
}

/// Addresses of a PWFCOMB instance, shareable with objects that need to read
/// another instance's `S` (the wait-free queue's dequeuers).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PwfGeometry {
    n: usize,
    rec_lines: usize,
    records: Region,
    s: Region,
}

/// Record header: flush, Deactivate bits, Index bits; then ReturnVal[n], then st.
const FLUSH: usize = 0;
const DEACT: usize = 1;
const INDEX: usize = 2;
const HEADER: usize = 3;

impl PwfGeometry {
    pub fn threads(&self) -> usize {
        self.n
    }

    pub fn s_addr(&self) -> WordAddr {
        self.s.base()
    }

    pub fn s_line(&self) -> LineAddr {
        self.s.line(0)
    }

    pub fn dummy(&self) -> usize {
        2 * self.n
    }

    pub fn handle(&self, thread: usize, slot: usize) -> usize {
        2 * thread + slot
    }

    pub fn record(&self, handle: usize) -> WordAddr {
        self.records.base().offset(handle * self.rec_lines * WORDS_PER_LINE)
    }

    pub fn record_line(&self, handle: usize, i: usize) -> LineAddr {
        self.record(handle).line().offset_lines(i)
    }

    pub fn rec_lines(&self) -> usize {
        self.rec_lines
    }

    pub fn flush(&self, handle: usize) -> WordAddr {
        self.record(handle).offset(FLUSH)
    }

    pub fn deactivate(&self, handle: usize) -> WordAddr {
        self.record(handle).offset(DEACT)
    }

    pub fn index(&self, handle: usize) -> WordAddr {
        self.record(handle).offset(INDEX)
    }

    pub fn ret(&self, handle: usize, q: usize) -> WordAddr {
        self.record(handle).offset(HEADER + q)
    }

    pub fn state(&self, handle: usize) -> WordAddr {
        self.record(handle).offset(HEADER + self.n)
    }

    /// LL: the current `(handle, version)`.
    pub fn ll<M: Memory>(&self, mem: &M, tid: usize) -> (usize, u64) {
        unpack_ref(mem.load(tid, self.s_addr()))
    }

    /// Handle S currently designates, without ordering side effects.
    pub fn current<M: Memory>(&self, mem: &M) -> usize {
        unpack_ref(mem.peek(self.s_addr())).0
    }

    /// Writes back and drains S when the record it designates has an odd flush
    /// counter. Used before linking nodes reachable only through that record.
    pub fn persist_if_unflushed<M: Memory>(&self, mem: &M, tid: usize) -> bool {
        let (h, _) = self.ll(mem, tid);
        if mem.load(tid, self.flush(h)) % 2 == 1 {
            mem.pwb(tid, self.s_line(), Site::ConnectPwbS);
            mem.psync(tid, Site::ConnectSync);
            true
        } else {
            false
        }
    }
}

trait LineOffset {
    fn offset_lines(self, i: usize) -> LineAddr;
}

impl LineOffset for LineAddr {
    fn offset_lines(self, i: usize) -> LineAddr {
        LineAddr(self.0 + i)
    }
}

/// One PWFCOMB instance.
pub struct PwfComb<O: SeqObject> {
    n: usize,
    object: O,
    cfg: PwfConfig,
    request: RequestArray,
    geo: PwfGeometry,
    stats: CombiningStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Pc {
    Announce,
    Backoff,
    Ll,
    ReadIndex,
    Copy,
    Vl1,
    Begin,
    Serve,
    Vl2,
    FlipIndex,
    PersistTouched,
    PwbRequest,
    PwbRecord,
    Pfence,
    SetFlush,
    Sc,
    PwbS,
    Psync,
    CasFlush,
    ReturnS,
    HelpReadS,
    HelpReadFlush,
    HelpPwbS,
    HelpPsync,
    HelpCas,
    HelpReturn,
    RecoverSeq,
    RecoverApplied,
}

/// Per-thread progress through one PWFCOMB operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PwfMachine<L> {
    call: Call,
    pc: Pc,
    attempt: u8,
    s: u64,
    src: usize,
    ind: usize,
    line: usize,
    lval: u64,
    help: usize,
    q: usize,
    applying: bool,
    served: u64,
    local: L,
    touched: BTreeSet<usize>,
}

impl<O: SeqObject> PwfComb<O> {
    pub fn new(b: &mut LayoutBuilder, n: usize, object: O, cfg: PwfConfig) -> Result<Self, ConfigError> {
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
        let tag = cfg.instance;
        let rec_lines = (HEADER + n + st_words).div_ceil(WORDS_PER_LINE);
        let request = RequestArray::new(b.persistent(format!("pwf{tag}.request"), n));
        let records = b.persistent(format!("pwf{tag}.memstate"), (2 * n + 1) * rec_lines);
        let s = b.persistent(format!("pwf{tag}.s"), 1);
        Ok(PwfComb {
            n,
            object,
            cfg,
            request,
            geo: PwfGeometry {
                n,
                rec_lines,
                records,
                s,
            },
            stats: CombiningStats::default(),
        })
    }

    pub fn geometry(&self) -> &PwfGeometry {
        &self.geo
    }

    pub fn object(&self) -> &O {
        &self.object
    }

    pub fn record_lines(&self) -> usize {
        self.geo.rec_lines
    }

    fn skip(&self, m: PwfMutation) -> bool {
        self.cfg.mutation == Some(m)
    }

    /// Steps of one combining attempt, at most.
    pub fn attempt_steps(&self) -> usize {
        let fixed = 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1;
        fixed + self.geo.rec_lines + self.object.max_begin_steps() + self.n * self.object.max_apply_steps().max(1)
    }

    fn mine(&self, tid: usize, m: &PwfMachine<O::Local>) -> usize {
        self.geo.handle(tid, m.ind)
    }

    /// Record hygiene: nobody writes the record S designates.
    fn check_hygiene<M: Memory>(&self, mem: &M, tid: usize, h: usize, what: &str) {
        if mem.tracing() && self.geo.current(mem) == h {
            mem.shadow(
                tid,
                ShadowEvent::Violation(format!("thread {tid} wrote {what} of record {h}, which S designates")),
            );
        }
    }

    fn ctx<'a, M: Memory>(
        &self,
        mem: &'a M,
        tid: usize,
        h: usize,
        touched: &'a mut BTreeSet<usize>,
    ) -> ApplyCtx<'a, M> {
        ApplyCtx {
            mem,
            tid,
            state: self.geo.state(h),
            touched,
        }
    }

    fn fail_attempt(&self, m: &mut PwfMachine<O::Local>) {
        m.attempt += 1;
        m.pc = if m.attempt >= ATTEMPTS { Pc::HelpReadS } else { Pc::Ll };
    }

    fn read_response<M: Memory>(&self, mem: &M, tid: usize) -> u64 {
        let (h, _) = self.geo.ll(mem, tid);
        mem.load(tid, self.geo.ret(h, tid))
    }

    fn exec<M: Memory>(&self, tid: usize, m: &mut PwfMachine<O::Local>, mem: &M) -> Option<Step> {
        let geo = &self.geo;
        let next = |m: &mut PwfMachine<O::Local>, pc| {
            m.pc = pc;
            Some(Step::Progress)
        };
        match m.pc {
            Pc::Announce => {
                self.request.announce(mem, tid, &m.call);
                next(m, Pc::Backoff)
            }
            Pc::Backoff => {
                mem.backoff(tid);
                m.attempt = 0;
                next(m, Pc::Ll)
            }
            Pc::Ll => {
                m.s = mem.load(tid, geo.s_addr());
                m.src = unpack_ref(m.s).0;
                next(m, Pc::ReadIndex)
            }
            Pc::ReadIndex => {
                m.ind = bit(mem.load(tid, geo.index(m.src)), tid) as usize;
                m.line = 0;
                next(m, Pc::Copy)
            }
            Pc::Copy => {
                let dst = self.mine(tid, m);
                self.check_hygiene(mem, tid, dst, "a copied line");
                let from = geo.record(m.src).offset(m.line * WORDS_PER_LINE);
                let to = geo.record(dst).offset(m.line * WORDS_PER_LINE);
                for i in 0..WORDS_PER_LINE {
                    mem.store(tid, to.offset(i), mem.load(tid, from.offset(i)));
                }
                m.line += 1;
                if m.line == geo.rec_lines {
                    m.pc = Pc::Vl1;
                }
                Some(Step::Progress)
            }
            Pc::Vl1 => {
                if mem.load(tid, geo.s_addr()) != m.s {
                    self.fail_attempt(m);
                    return Some(Step::Progress);
                }
                m.q = 0;
                m.served = 0;
                m.applying = false;
                m.touched.clear();
                m.local = O::Local::default();
                next(m, Pc::Begin)
            }
            Pc::Begin => {
                let h = self.mine(tid, m);
                let mut ctx = self.ctx(mem, tid, h, &mut m.touched);
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
                    m.pc = Pc::Vl2;
                    return None;
                }
                let q = m.q;
                let h = self.mine(tid, m);
                if !m.applying {
                    let (_, act) = self.request.seq(mem, tid, q);
                    if act == bit(mem.load(tid, geo.deactivate(h)), q) {
                        m.q += 1;
                        return Some(Step::Progress);
                    }
                    m.applying = true;
                }
                let req = self.request.read(mem, tid, q);
                let mut ctx = self.ctx(mem, tid, h, &mut m.touched);
                match self.object.apply(&mut ctx, &mut m.local, req.func, &req.args) {
                    Poll::Pending => Some(Step::Progress),
                    Poll::Ready(v) => {
                        let (_, act) = self.request.seq(mem, tid, q);
                        self.check_hygiene(mem, tid, h, "a response");
                        mem.store(tid, geo.ret(h, q), v);
                        let d = mem.load(tid, geo.deactivate(h));
                        mem.store(tid, geo.deactivate(h), with_bit(d, q, act));
                        m.applying = false;
                        m.local = O::Local::default();
                        m.served += 1;
                        m.q += 1;
                        Some(Step::Progress)
                    }
                }
            }
            Pc::Vl2 => {
                if mem.load(tid, geo.s_addr()) != m.s {
                    self.fail_attempt(m);
                    return Some(Step::Progress);
                }
                next(m, Pc::FlipIndex)
            }
            Pc::FlipIndex => {
                let h = self.mine(tid, m);
                self.check_hygiene(mem, tid, h, "the Index array");
                let idx = mem.load(tid, geo.index(h));
                mem.store(tid, geo.index(h), with_bit(idx, tid, 1 - bit(idx, tid)));
                next(m, Pc::PersistTouched)
            }
            Pc::PersistTouched => {
                m.pc = Pc::PwbRequest;
                if m.touched.is_empty() || self.skip(PwfMutation::SkipPwbNodes) {
                    return None;
                }
                for &l in &m.touched {
                    mem.pwb(tid, LineAddr(l), Site::Nodes);
                }
                Some(Step::Progress)
            }
            Pc::PwbRequest => {
                m.pc = Pc::PwbRecord;
                if self.skip(PwfMutation::SkipPwbRequest) {
                    return None;
                }
                for line in self.request.lines() {
                    mem.pwb(tid, line, Site::WfRequest);
                }
                Some(Step::Progress)
            }
            Pc::PwbRecord => {
                m.pc = Pc::Pfence;
                if self.skip(PwfMutation::SkipPwbRecord) {
                    return None;
                }
                let h = self.mine(tid, m);
                for i in 0..geo.rec_lines {
                    mem.pwb(tid, geo.record_line(h, i), Site::WfRecord);
                }
                Some(Step::Progress)
            }
            Pc::Pfence => {
                m.pc = Pc::SetFlush;
                if self.skip(PwfMutation::SkipPfence) {
                    return None;
                }
                mem.pfence(tid, Site::WfFence);
                Some(Step::Progress)
            }
            Pc::SetFlush => {
                m.pc = Pc::Sc;
                if self.skip(PwfMutation::SkipFlush) {
                    return None;
                }
                let h = self.mine(tid, m);
                m.lval = mem.load(tid, geo.flush(h));
                if m.lval % 2 == 0 {
                    m.lval += 1;
                    self.check_hygiene(mem, tid, h, "the flush counter");
                    mem.store(tid, geo.flush(h), m.lval);
                }
                Some(Step::Progress)
            }
            Pc::Sc => {
                let (_, version) = unpack_ref(m.s);
                let new = pack_ref(self.mine(tid, m), version + 1);
                if mem.cas(tid, geo.s_addr(), m.s, new) {
                    mem.backoff_succeeded(tid);
                    self.stats.record(m.served);
                    next(m, Pc::PwbS)
                } else {
                    mem.backoff_failed(tid);
                    self.fail_attempt(m);
                    Some(Step::Progress)
                }
            }
            Pc::PwbS => {
                m.pc = Pc::Psync;
                if self.skip(PwfMutation::SkipPwbS) {
                    return None;
                }
                mem.pwb(tid, geo.s_line(), Site::WfPwbS);
                Some(Step::Progress)
            }
            Pc::Psync => {
                m.pc = Pc::CasFlush;
                if self.skip(PwfMutation::SkipPsync) {
                    return None;
                }
                mem.psync(tid, Site::WfSyncS);
                Some(Step::Progress)
            }
            Pc::CasFlush => {
                m.pc = Pc::ReturnS;
                if self.skip(PwfMutation::SkipFlush) {
                    return None;
                }
                let h = self.mine(tid, m);
                mem.cas(tid, geo.flush(h), m.lval, m.lval + 1);
                Some(Step::Progress)
            }
            Pc::ReturnS | Pc::HelpReturn => Some(Step::Done(self.read_response(mem, tid))),
            Pc::HelpReadS => {
                m.help = geo.ll(mem, tid).0;
                next(m, Pc::HelpReadFlush)
            }
            Pc::HelpReadFlush => {
                if self.skip(PwfMutation::SkipFlush) {
                    m.pc = Pc::HelpReturn;
                    return None;
                }
                m.lval = mem.load(tid, geo.flush(m.help));
                next(m, if m.lval % 2 == 1 { Pc::HelpPwbS } else { Pc::HelpReturn })
            }
            Pc::HelpPwbS => {
                m.pc = Pc::HelpPsync;
                if self.skip(PwfMutation::SkipPwbS) {
                    return None;
                }
                mem.pwb(tid, geo.s_line(), Site::WfHelpPwbS);
                Some(Step::Progress)
            }
            Pc::HelpPsync => {
                m.pc = Pc::HelpCas;
                if self.skip(PwfMutation::SkipPsync) {
                    return None;
                }
                mem.psync(tid, Site::WfHelpSyncS);
                Some(Step::Progress)
            }
            Pc::HelpCas => {
                mem.cas(tid, geo.flush(m.help), m.lval, m.lval + 1);
                next(m, Pc::HelpReturn)
            }
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
            Pc::RecoverApplied => {
                let (_, act) = self.request.seq(mem, tid, tid);
                let (h, _) = geo.ll(mem, tid);
                if act != bit(mem.load(tid, geo.deactivate(h)), tid) {
                    return next(m, Pc::Backoff);
                }
                Some(Step::Done(mem.load(tid, geo.ret(h, tid))))
            }
        }
    }

    /// After a crash: if S's persisted target is a thread's own record, that
    /// thread's Index bit in it must point at its other record.
    pub fn check_index_invariant<M: Memory>(&self, mem: &M) -> Result<(), String> {
        let h = self.geo.current(mem);
        if h == self.geo.dummy() {
            return Ok(());
        }
        let (t, slot) = (h / 2, h % 2);
        let idx = bit(mem.peek(self.geo.index(h)), t) as usize;
        if idx == slot {
            return Err(format!(
                "S designates record {h} of thread {t}, whose Index bit still selects it"
            ));
        }
        Ok(())
    }

    /// Even flush on S's record implies S's current value is persisted.
    pub fn check_flush_invariant(&self, mem: &ModelMemory) -> Result<(), String> {
        let s = mem.peek(self.geo.s_addr());
        let (h, _) = unpack_ref(s);
        if mem.peek(self.geo.flush(h)) % 2 == 1 {
            return Ok(());
        }
        let persisted = mem.with_pmem(|p| p.persisted_word(self.geo.s_addr()).unwrap_or(0));
        if persisted != s {
            return Err(format!(
                "flush of record {h} is even but S={s:#x} is not persisted (persisted {persisted:#x})"
            ));
        }
        Ok(())
    }

    pub(crate) fn write_initial<M: Memory>(&self, mem: &M) {
        let dummy = self.geo.dummy();
        for (i, w) in self.object.initial_state().iter().enumerate() {
            mem.store(0, self.geo.state(dummy).offset(i), *w);
        }
        mem.store(0, self.geo.s_addr(), pack_ref(dummy, 0));
    }

    pub(crate) fn persist_initial<M: Memory>(&self, mem: &M) {
        for line in self.request.lines() {
            mem.pwb(0, line, Site::Init);
        }
        for i in 0..self.geo.rec_lines {
            mem.pwb(0, self.geo.record_line(self.geo.dummy(), i), Site::Init);
        }
        mem.pwb(0, self.geo.s_line(), Site::Init);
    }
}

impl<O: SeqObject> Recoverable for PwfComb<O> {
    type Machine = PwfMachine<O::Local>;

    fn name(&self) -> String {
        format!("pwfcomb/{}", self.object.name())
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
        PwfMachine {
            call,
            pc: Pc::Announce,
            attempt: 0,
            s: 0,
            src: 0,
            ind: 0,
            line: 0,
            lval: 0,
            help: 0,
            q: 0,
            applying: false,
            served: 0,
            local: O::Local::default(),
            touched: BTreeSet::new(),
        }
    }

    fn recover(&self, tid: usize, call: Call) -> Self::Machine {
        let mut m = self.invoke(tid, call);
        m.pc = Pc::RecoverSeq;
        m
    }

    fn step<M: Memory>(&self, tid: usize, m: &mut Self::Machine, mem: &M) -> Step {
        loop {
            if let Some(s) = self.exec(tid, m, mem) {
                return s;
            }
        }
    }

    fn dump<M: Memory>(&self, mem: &M) -> Vec<u64> {
        self.object.dump(mem, self.geo.state(self.geo.current(mem)))
    }

    fn step_bound(&self, recovering: bool) -> Option<usize> {
        let invoke = 2 + ATTEMPTS as usize * self.attempt_steps() + 6;
        Some(if recovering { invoke + 2 } else { invoke })
    }

    fn audit(&self, mem: &ModelMemory, after_crash: bool) -> Result<(), String> {
        if after_crash {
            self.check_index_invariant(mem)?;
        }
        self.check_flush_invariant(mem)
    }

    fn combining(&self) -> Vec<&CombiningStats> {
        vec![&self.stats]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::execute;
    use crate::memory::ModelMemory;
    use crate::structures::{Counter, COUNTER_INC};

    fn setup(n: usize) -> (PwfComb<Counter>, ModelMemory) {
        let mut b = LayoutBuilder::new();
        let c = PwfComb::new(&mut b, n, Counter, PwfConfig::default()).unwrap();
        let mem = ModelMemory::from_layout(b.build(), n);
        c.init(&mem);
        (c, mem)
    }

    #[test]
    fn ref_packing_roundtrip() {
        assert_eq!(unpack_ref(pack_ref(129, 77)), (129, 77));
    }

    #[test]
    fn ll_sc_without_interference_succeeds() {
        let (c, mem) = setup(2);
        let s = mem.load(0, c.geo.s_addr());
        let (h, v) = unpack_ref(s);
        assert!(mem.cas(0, c.geo.s_addr(), s, pack_ref(h, v + 1)));
    }

    #[test]
    fn version_defeats_aba() {
        let (c, mem) = setup(2);
        let a = mem.load(0, c.geo.s_addr());
        let (h, v) = unpack_ref(a);
        assert!(mem.cas(1, c.geo.s_addr(), a, pack_ref(0, v + 1)));
        let b = mem.load(1, c.geo.s_addr());
        assert!(mem.cas(1, c.geo.s_addr(), b, pack_ref(h, v + 2)));
        assert_eq!(unpack_ref(mem.peek(c.geo.s_addr())).0, h);
        assert!(!mem.cas(0, c.geo.s_addr(), a, pack_ref(1, v + 1)));
    }

    #[test]
    fn solo_thread_wins_first_attempt() {
        let (c, mem) = setup(1);
        mem.reset_stats();
        assert_eq!(execute(&c, 0, Call::new(COUNTER_INC, 0, 1), &mem), 0);
        assert_eq!(execute(&c, 0, Call::new(COUNTER_INC, 0, 2), &mem), 1);
        let st = mem.stats();
        assert_eq!(st.site(Site::WfPwbS).pwb, 2);
        assert_eq!(st.site(Site::WfSyncS).psync, 2);
        assert_eq!(st.site(Site::WfHelpPwbS).pwb, 0);
        assert_eq!(c.dump(&mem), vec![2]);
        assert!(c.check_index_invariant(&mem).is_ok());
        assert!(c.check_flush_invariant(&mem).is_ok());
        assert!(mem
            .shadow_log()
            .iter()
            .all(|(_, e)| !matches!(e, ShadowEvent::Violation(_))));
    }

    #[test]
    fn records_alternate_per_thread() {
        let (c, mem) = setup(1);
        execute(&c, 0, Call::new(COUNTER_INC, 0, 1), &mem);
        let h1 = c.geo.current(&mem);
        execute(&c, 0, Call::new(COUNTER_INC, 0, 2), &mem);
        let h2 = c.geo.current(&mem);
        assert_ne!(h1, h2);
        assert_eq!(h1 / 2, h2 / 2);
    }

    #[test]
    fn step_bound_accounts_for_help_path() {
        let (c, _) = setup(3);
        let b = c.step_bound(false).unwrap();
        assert_eq!(b, 2 + 2 * c.attempt_steps() + 6);
        assert_eq!(c.step_bound(true).unwrap(), b + 2);
    }
}
