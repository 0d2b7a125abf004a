//! The word-level memory interface the algorithms are written against.
//!
//! [`ModelMemory`] routes every access through the [`PMem`] emulator so the
//! harness can crash it at any step. [`LiveMemory`] is a flat array of atomics
//! for real threads, where persistence instructions are counted and optionally
//! mapped to cache-line write-back intrinsics.

use std::cell::RefCell;
use std::hint;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crate::pmem::{
    Counts, CrashOutcome, CrashSelector, Layout, LineAddr, PMem, PMemError, PersistStats, Site, WordAddr,
    WORDS_PER_LINE,
};

/// Side-channel facts emitted by the algorithms for the harness to assert on.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ShadowEvent {
    /// A combiner took the lock of `instance`.
    Acquire { instance: u8 },
    /// The combiner released the lock of `instance`.
    Release { instance: u8 },
    /// `thread`'s request `seq` was applied to the sequential object.
    Applied { instance: u8, thread: usize, seq: u64 },
    /// A blocking combining round finished, serving `served` requests into `slot`.
    Round { instance: u8, slot: u64, served: u64 },
    /// A dequeue took `value` out of the node whose data word is `data`.
    Handout { instance: u8, data: WordAddr, value: u64 },
    /// An algorithm-level invariant failed.
    Violation(String),
}

/// Memory operations used by the combining protocols. All loads and stores are
/// sequentially consistent.
pub trait Memory {
    fn load(&self, tid: usize, addr: WordAddr) -> u64;
    /// Load with no ordering side effect, for enabledness checks and dumps.
    fn peek(&self, addr: WordAddr) -> u64;
    fn store(&self, tid: usize, addr: WordAddr, v: u64);
    fn cas(&self, tid: usize, addr: WordAddr, current: u64, new: u64) -> bool;
    fn fetch_add(&self, tid: usize, addr: WordAddr, delta: u64) -> u64;
    fn pwb(&self, tid: usize, line: LineAddr, site: Site);
    fn pfence(&self, tid: usize, site: Site);
    fn psync(&self, tid: usize, site: Site);
    /// Backoff between announcing and combining.
    fn backoff(&self, _tid: usize) {}
    /// Called after a failed SC, to grow the backoff window.
    fn backoff_failed(&self, _tid: usize) {}
    /// Called after a successful SC, to shrink it.
    fn backoff_succeeded(&self, _tid: usize) {}
    fn shadow(&self, _tid: usize, _ev: ShadowEvent) {}
    /// True when shadow events are being recorded (model runs).
    fn tracing(&self) -> bool {
        false
    }
}

/// Single-control-flow memory over the persistency emulator.
#[derive(Clone, Debug)]
pub struct ModelMemory {
    pmem: RefCell<PMem>,
    faults: RefCell<Vec<PMemError>>,
    shadow: RefCell<Vec<(usize, ShadowEvent)>>,
    trace: bool,
}

impl ModelMemory {
    pub fn new(pmem: PMem) -> Self {
        ModelMemory {
            pmem: RefCell::new(pmem),
            faults: RefCell::new(Vec::new()),
            shadow: RefCell::new(Vec::new()),
            trace: true,
        }
    }

    /// Disables the shadow log (benchmarks).
    pub fn without_trace(mut self) -> Self {
        self.trace = false;
        self
    }

    pub fn from_layout(layout: Layout, threads: usize) -> Self {
        Self::new(PMem::new(layout, threads))
    }

    pub fn with_pmem<R>(&self, f: impl FnOnce(&PMem) -> R) -> R {
        f(&self.pmem.borrow())
    }

    pub fn with_pmem_mut<R>(&self, f: impl FnOnce(&mut PMem) -> R) -> R {
        f(&mut self.pmem.borrow_mut())
    }

    pub fn crash(&self, selector: &CrashSelector) -> Result<CrashOutcome, PMemError> {
        self.pmem.borrow_mut().crash(selector)
    }

    pub fn stats(&self) -> PersistStats {
        self.pmem.borrow().stats().clone()
    }

    pub fn reset_stats(&self) {
        self.pmem.borrow_mut().reset_stats();
    }

    pub fn faults(&self) -> Vec<PMemError> {
        self.faults.borrow().clone()
    }

    pub fn shadow_log(&self) -> Vec<(usize, ShadowEvent)> {
        self.shadow.borrow().clone()
    }

    pub fn shadow_len(&self) -> usize {
        self.shadow.borrow().len()
    }

    pub fn clear_shadow(&self) {
        self.shadow.borrow_mut().clear();
    }

    fn fault<T: Default>(&self, r: Result<T, PMemError>) -> T {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.faults.borrow_mut().push(e);
                T::default()
            }
        }
    }
}

impl Memory for ModelMemory {
    fn load(&self, tid: usize, addr: WordAddr) -> u64 {
        let r = self.pmem.borrow_mut().read(tid, addr);
        self.fault(r)
    }

    fn peek(&self, addr: WordAddr) -> u64 {
        let r = self.pmem.borrow().peek(addr);
        self.fault(r)
    }

    fn store(&self, tid: usize, addr: WordAddr, v: u64) {
        let r = self.pmem.borrow_mut().write(tid, addr, v);
        self.fault(r)
    }

    fn cas(&self, tid: usize, addr: WordAddr, current: u64, new: u64) -> bool {
        let r = self.pmem.borrow_mut().cas(tid, addr, current, new);
        self.fault(r)
    }

    fn fetch_add(&self, tid: usize, addr: WordAddr, delta: u64) -> u64 {
        let r = self.pmem.borrow_mut().fetch_add(tid, addr, delta);
        self.fault(r)
    }

    fn pwb(&self, tid: usize, line: LineAddr, site: Site) {
        let r = self.pmem.borrow_mut().pwb(tid, line, site);
        self.fault(r)
    }

    fn pfence(&self, tid: usize, site: Site) {
        self.pmem.borrow_mut().pfence(tid, site);
    }

    fn psync(&self, tid: usize, site: Site) {
        self.pmem.borrow_mut().psync(tid, site);
    }

    fn shadow(&self, tid: usize, ev: ShadowEvent) {
        if self.trace {
            self.shadow.borrow_mut().push((tid, ev));
        }
    }

    fn tracing(&self) -> bool {
        self.trace
    }
}

/// What live-mode persistence instructions do besides being counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LiveBackend {
    CountedNoop,
    /// `clflush` for pwb and `sfence` for pfence/psync on x86-64; counted no-ops elsewhere.
    Hardware,
}

#[repr(align(128))]
struct Padded<T>(T);

const COUNTER_SLOTS: usize = Site::COUNT * 3;

/// Truncated exponential backoff parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackoffConfig {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        BackoffConfig {
            base: Duration::from_micros(1),
            cap: Duration::from_micros(128),
        }
    }
}

/// Shared memory for real threads.
pub struct LiveMemory {
    words: Box<[AtomicU64]>,
    counters: Box<[Padded<[AtomicU64; COUNTER_SLOTS]>]>,
    backoff: Box<[Padded<AtomicU64>]>,
    backoff_cfg: BackoffConfig,
    backend: LiveBackend,
}

impl LiveMemory {
    pub fn new(layout: &Layout, threads: usize, backend: LiveBackend) -> Self {
        Self::with_backoff(layout, threads, backend, BackoffConfig::default())
    }

    pub fn with_backoff(layout: &Layout, threads: usize, backend: LiveBackend, backoff_cfg: BackoffConfig) -> Self {
        let words = (0..layout.words()).map(|_| AtomicU64::new(0)).collect();
        let counters = (0..threads)
            .map(|_| Padded(std::array::from_fn(|_| AtomicU64::new(0))))
            .collect();
        let base = backoff_cfg.base.as_nanos() as u64;
        let backoff = (0..threads).map(|_| Padded(AtomicU64::new(base))).collect();
        LiveMemory {
            words,
            counters,
            backoff,
            backoff_cfg,
            backend,
        }
    }

    pub fn backend(&self) -> LiveBackend {
        self.backend
    }

    fn count(&self, tid: usize, site: Site, kind: usize) {
        self.counters[tid].0[site.index() * 3 + kind].fetch_add(1, Ordering::Relaxed);
    }

    pub fn stats(&self) -> PersistStats {
        let mut entries = Vec::new();
        for (tid, c) in self.counters.iter().enumerate() {
            for site in Site::ALL {
                let i = site.index() * 3;
                let counts = Counts {
                    pwb: c.0[i].load(Ordering::Relaxed),
                    pfence: c.0[i + 1].load(Ordering::Relaxed),
                    psync: c.0[i + 2].load(Ordering::Relaxed),
                };
                entries.push(((site, tid), counts));
            }
        }
        PersistStats::from_entries(entries)
    }

    pub fn reset_stats(&self) {
        for c in self.counters.iter() {
            for a in c.0.iter() {
                a.store(0, Ordering::Relaxed);
            }
        }
    }

    pub fn words(&self) -> usize {
        self.words.len()
    }

    #[cfg(target_arch = "x86_64")]
    fn flush_line(&self, line: LineAddr) {
        if let Some(w) = self.words.get(line.0 * WORDS_PER_LINE) {
            // SAFETY: the pointer is to a live element of `self.words`.
            unsafe { std::arch::x86_64::_mm_clflush(w.as_ptr() as *const u8) }
        }
    }

    #[cfg(not(target_arch = "x86_64"))]
    fn flush_line(&self, _line: LineAddr) {}

    fn fence(&self) {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: sfence has no memory-safety preconditions.
        unsafe {
            std::arch::x86_64::_mm_sfence()
        }
    }
}

impl Memory for LiveMemory {
    fn load(&self, _tid: usize, addr: WordAddr) -> u64 {
        self.words[addr.0].load(Ordering::SeqCst)
    }

    fn peek(&self, addr: WordAddr) -> u64 {
        self.words[addr.0].load(Ordering::SeqCst)
    }

    fn store(&self, _tid: usize, addr: WordAddr, v: u64) {
        self.words[addr.0].store(v, Ordering::SeqCst)
    }

    fn cas(&self, _tid: usize, addr: WordAddr, current: u64, new: u64) -> bool {
        self.words[addr.0]
            .compare_exchange(current, new, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }

    fn fetch_add(&self, _tid: usize, addr: WordAddr, delta: u64) -> u64 {
        self.words[addr.0].fetch_add(delta, Ordering::SeqCst)
    }

    fn pwb(&self, tid: usize, line: LineAddr, site: Site) {
        self.count(tid, site, 0);
        if self.backend == LiveBackend::Hardware {
            self.flush_line(line);
        }
    }

    fn pfence(&self, tid: usize, site: Site) {
        self.count(tid, site, 1);
        if self.backend == LiveBackend::Hardware {
            self.fence();
        }
    }

    fn psync(&self, tid: usize, site: Site) {
        self.count(tid, site, 2);
        if self.backend == LiveBackend::Hardware {
            self.fence();
        }
    }

    fn backoff(&self, tid: usize) {
        let ns = self.backoff[tid].0.load(Ordering::Relaxed);
        let until = Instant::now() + Duration::from_nanos(ns);
        while Instant::now() < until {
            hint::spin_loop();
        }
    }

    fn backoff_failed(&self, tid: usize) {
        let cap = self.backoff_cfg.cap.as_nanos() as u64;
        let b = &self.backoff[tid].0;
        b.store((b.load(Ordering::Relaxed) * 2).min(cap), Ordering::Relaxed);
    }

    fn backoff_succeeded(&self, tid: usize) {
        let base = self.backoff_cfg.base.as_nanos() as u64;
        let b = &self.backoff[tid].0;
        b.store((b.load(Ordering::Relaxed) / 2).max(base), Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmem::LayoutBuilder;

    fn layout() -> Layout {
        let mut b = LayoutBuilder::new();
        b.persistent("d", 2);
        b.volatile("v", 1);
        b.build()
    }

    #[test]
    fn model_records_faults_instead_of_panicking() {
        let m = ModelMemory::from_layout(layout(), 1);
        m.pwb(0, LineAddr(2), Site::Test);
        assert_eq!(m.load(0, WordAddr(999)), 0);
        assert_eq!(m.faults().len(), 2);
    }

    #[test]
    fn live_counters_partition_by_thread_and_site() {
        let m = LiveMemory::new(&layout(), 2, LiveBackend::CountedNoop);
        m.pwb(0, LineAddr(0), Site::CombState);
        m.pwb(1, LineAddr(1), Site::CombRequest);
        m.pfence(1, Site::CombFence);
        m.psync(0, Site::CombSync);
        let s = m.stats();
        assert_eq!(
            s.total(),
            Counts {
                pwb: 2,
                pfence: 1,
                psync: 1
            }
        );
        assert_eq!(
            s.thread(1),
            Counts {
                pwb: 1,
                pfence: 1,
                psync: 0
            }
        );
        m.reset_stats();
        assert_eq!(m.stats().total(), Counts::default());
    }

    #[test]
    fn live_counters_tolerate_concurrent_increments() {
        let m = LiveMemory::new(&layout(), 4, LiveBackend::Hardware);
        std::thread::scope(|s| {
            for t in 0..4 {
                let m = &m;
                s.spawn(move || {
                    for _ in 0..1000 {
                        m.pwb(t, LineAddr(0), Site::Test);
                        m.fetch_add(t, WordAddr(0), 1);
                    }
                });
            }
        });
        assert_eq!(m.stats().total().pwb, 4000);
        assert_eq!(m.peek(WordAddr(0)), 4000);
    }

    #[test]
    fn backoff_window_is_truncated() {
        let m = LiveMemory::new(&layout(), 1, LiveBackend::CountedNoop);
        for _ in 0..20 {
            m.backoff_failed(0);
        }
        assert_eq!(m.backoff[0].0.load(Ordering::Relaxed), 128_000);
        for _ in 0..20 {
            m.backoff_succeeded(0);
        }
        assert_eq!(m.backoff[0].0.load(Ordering::Relaxed), 1_000);
    }
}
