//! Emulated explicit epoch persistency.
//!
//! A [`PMem`] keeps two images of a cache-line-granular address space: the
//! volatile image that loads and stores see, and the persistent image that
//! survives a crash. A `pwb` captures the line's contents at issue time into
//! the issuing thread's pending log, stamped with the thread's current epoch.
//! `pfence` closes the epoch and `psync` commits every pending write-back of
//! the thread. A crash persists an adversarially chosen legal subset of what
//! is still pending.
//!
//! Ordering also flows between threads: a store issued after a `pfence`
//! carries the writer's closed epochs, and a thread that reads it may not see
//! its own later write-backs persist ahead of them.

mod cut;
mod layout;
mod stats;

pub use cut::{enumerate_legal_cuts, is_legal_cut, random_cut, CutViolation};
pub use layout::{
    Layout, LayoutBuilder, LineAddr, Region, RegionClass, WordAddr, LINE_BYTES, WORDS_PER_LINE, WORD_BYTES,
};
pub use stats::{Counts, PersistStats, Site};

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stats::Instr;
use thiserror::Error;

/// Line contents.
pub type CacheLine = [u64; WORDS_PER_LINE];

/// Whether dirty lines may reach persistence without a pwb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvictionMode {
    /// Only pwb moves data to the persistent image.
    Strict,
    /// A crash may additionally persist the current contents of any dirty line.
    /// A fuzzing knob: the combining algorithms are not required to survive it.
    Relaxed { seed: u64 },
}

/// A pending or committed write-back.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PersistEvent {
    pub thread: usize,
    pub line: LineAddr,
    pub snapshot: CacheLine,
    pub epoch: u64,
    /// Global clock value at issue; doubles as the event id.
    pub stamp: u64,
    /// `deps[x] = k`: every event of thread `x` with epoch below `k` persists first.
    pub deps: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct ThreadLog {
    epoch: u64,
    events: Vec<PersistEvent>,
    /// Fenced epochs of other threads observed through reads.
    seen: Vec<u64>,
}

/// How a crash chooses which pending write-backs made it to persistence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CrashSelector {
    /// Every pending event persisted (maximal cut).
    All,
    /// Only what psync already committed (minimal cut).
    None,
    /// A randomly drawn legal cut.
    Random(u64),
    /// Exactly these event stamps; must form a legal cut.
    Explicit(BTreeSet<u64>),
}

/// Result of a crash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrashOutcome {
    /// Word image after the crash (also the new volatile image).
    pub persisted_image: Vec<u64>,
    /// Stamps of the pending events chosen as persisted.
    pub selection: BTreeSet<u64>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PMemError {
    #[error("address {addr} outside the {words}-word address space")]
    OutOfRange { addr: WordAddr, words: usize },
    #[error("pwb on volatile line {line} ({region}): volatile regions are never persisted")]
    VolatilePwb { line: LineAddr, region: String },
    #[error("thread {thread} outside the {threads} threads declared for this memory")]
    UnknownThread { thread: usize, threads: usize },
    #[error("illegal crash selection: {0}")]
    IllegalCut(#[from] CutViolation),
}

/// The emulated memory.
#[derive(Clone, Debug)]
pub struct PMem {
    layout: Arc<Layout>,
    threads: usize,
    volatile: Vec<u64>,
    persistent: Vec<u64>,
    /// Per word, `threads` entries: the fenced epochs its last store carried.
    word_deps: Vec<u64>,
    logs: Vec<ThreadLog>,
    clock: u64,
    crashes: u64,
    mode: EvictionMode,
    stats: PersistStats,
}

impl PMem {
    pub fn new(layout: Layout, threads: usize) -> Self {
        Self::with_mode(layout, threads, EvictionMode::Strict)
    }

    pub fn with_mode(layout: Layout, threads: usize, mode: EvictionMode) -> Self {
        let words = layout.words();
        let threads = threads.max(1);
        PMem {
            layout: Arc::new(layout),
            threads,
            volatile: vec![0; words],
            persistent: vec![0; words],
            word_deps: vec![0; words * threads],
            logs: (0..threads)
                .map(|_| ThreadLog {
                    seen: vec![0; threads],
                    ..ThreadLog::default()
                })
                .collect(),
            clock: 0,
            crashes: 0,
            mode,
            stats: PersistStats::new(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn mode(&self) -> EvictionMode {
        self.mode
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn check(&self, addr: WordAddr) -> Result<(), PMemError> {
        if addr.0 < self.volatile.len() {
            Ok(())
        } else {
            Err(PMemError::OutOfRange {
                addr,
                words: self.volatile.len(),
            })
        }
    }

    fn check_thread(&self, thread: usize) -> Result<(), PMemError> {
        if thread < self.threads {
            Ok(())
        } else {
            Err(PMemError::UnknownThread {
                thread,
                threads: self.threads,
            })
        }
    }

    /// Current value without any ordering side effect.
    pub fn peek(&self, addr: WordAddr) -> Result<u64, PMemError> {
        self.check(addr)?;
        Ok(self.volatile[addr.0])
    }

    /// Load by `thread`; picks up the ordering carried by the word.
    pub fn read(&mut self, thread: usize, addr: WordAddr) -> Result<u64, PMemError> {
        self.check(addr)?;
        self.check_thread(thread)?;
        let n = self.threads;
        let deps = &self.word_deps[addr.0 * n..addr.0 * n + n];
        for (s, d) in self.logs[thread].seen.iter_mut().zip(deps) {
            *s = (*s).max(*d);
        }
        Ok(self.volatile[addr.0])
    }

    pub fn write(&mut self, thread: usize, addr: WordAddr, word: u64) -> Result<(), PMemError> {
        self.check(addr)?;
        self.check_thread(thread)?;
        self.clock += 1;
        self.volatile[addr.0] = word;
        let n = self.threads;
        let log = &self.logs[thread];
        let deps = &mut self.word_deps[addr.0 * n..addr.0 * n + n];
        deps.copy_from_slice(&log.seen);
        deps[thread] = deps[thread].max(log.epoch);
        Ok(())
    }

    pub fn cas(&mut self, thread: usize, addr: WordAddr, current: u64, new: u64) -> Result<bool, PMemError> {
        if self.read(thread, addr)? == current {
            self.write(thread, addr, new)?;
            Ok(true)
        } else {
            self.clock += 1;
            Ok(false)
        }
    }

    pub fn fetch_add(&mut self, thread: usize, addr: WordAddr, delta: u64) -> Result<u64, PMemError> {
        let old = self.read(thread, addr)?;
        self.write(thread, addr, old.wrapping_add(delta))?;
        Ok(old)
    }

    pub fn line(&self, line: LineAddr) -> CacheLine {
        let base = line.first_word().0;
        let mut out = [0; WORDS_PER_LINE];
        out.copy_from_slice(&self.volatile[base..base + WORDS_PER_LINE]);
        out
    }

    pub fn persisted_word(&self, addr: WordAddr) -> Result<u64, PMemError> {
        self.check(addr)?;
        Ok(self.persistent[addr.0])
    }

    pub fn persisted_line(&self, line: LineAddr) -> CacheLine {
        let base = line.first_word().0;
        let mut out = [0; WORDS_PER_LINE];
        out.copy_from_slice(&self.persistent[base..base + WORDS_PER_LINE]);
        out
    }

    pub fn volatile_image(&self) -> &[u64] {
        &self.volatile
    }

    pub fn persistent_image(&self) -> &[u64] {
        &self.persistent
    }

    pub fn pwb(&mut self, thread: usize, line: LineAddr, site: Site) -> Result<(), PMemError> {
        self.check(line.first_word())?;
        self.check_thread(thread)?;
        if self.layout.is_volatile(line) {
            let region = self.layout.region_of(line).map(|r| r.name.clone()).unwrap_or_default();
            return Err(PMemError::VolatilePwb { line, region });
        }
        self.clock += 1;
        let stamp = self.clock;
        let snapshot = self.line(line);
        let log = &mut self.logs[thread];
        let epoch = log.epoch;
        let mut deps = log.seen.clone();
        deps[thread] = deps[thread].max(epoch);
        log.events.push(PersistEvent {
            thread,
            line,
            snapshot,
            epoch,
            stamp,
            deps,
        });
        self.stats.record(thread, site, Instr::Pwb);
        Ok(())
    }

    pub fn pfence(&mut self, thread: usize, site: Site) {
        self.clock += 1;
        if let Some(log) = self.logs.get_mut(thread) {
            log.epoch += 1;
        }
        self.stats.record(thread, site, Instr::Pfence);
    }

    pub fn psync(&mut self, thread: usize, site: Site) {
        self.clock += 1;
        if thread < self.threads {
            let log = &mut self.logs[thread];
            log.epoch += 1;
            // Everything this thread issued, plus whatever must persist before it.
            let mut need = vec![0u64; self.threads];
            need[thread] = log.epoch;
            self.commit_closure(need);
        }
        self.stats.record(thread, site, Instr::Psync);
    }

    fn commit_closure(&mut self, mut need: Vec<u64>) {
        loop {
            let mut grown = false;
            for log in &self.logs {
                for ev in &log.events {
                    if ev.epoch < need[ev.thread] {
                        for (n, d) in need.iter_mut().zip(&ev.deps) {
                            if *d > *n {
                                *n = *d;
                                grown = true;
                            }
                        }
                    }
                }
            }
            if !grown {
                break;
            }
        }
        let mut committed: Vec<PersistEvent> = Vec::new();
        for log in &mut self.logs {
            let (done, keep): (Vec<_>, Vec<_>) = log.events.drain(..).partition(|e| e.epoch < need[e.thread]);
            log.events = keep;
            committed.extend(done);
        }
        committed.sort_by_key(|e| e.stamp);
        for ev in committed {
            self.install(&ev);
            // Older write-backs of the same line are superseded.
            for other in &mut self.logs {
                other.events.retain(|e| !(e.line == ev.line && e.stamp < ev.stamp));
            }
        }
    }

    fn install(&mut self, ev: &PersistEvent) {
        let base = ev.line.first_word().0;
        self.persistent[base..base + WORDS_PER_LINE].copy_from_slice(&ev.snapshot);
    }

    /// Pending events in global stamp order.
    pub fn pending(&self) -> Vec<&PersistEvent> {
        let mut all: Vec<&PersistEvent> = self.logs.iter().flat_map(|l| l.events.iter()).collect();
        all.sort_by_key(|e| e.stamp);
        all
    }

    /// Pending events of one thread in issue order.
    pub fn pending_of(&self, thread: usize) -> &[PersistEvent] {
        self.logs.get(thread).map(|l| l.events.as_slice()).unwrap_or(&[])
    }

    pub fn epoch(&self, thread: usize) -> u64 {
        self.logs.get(thread).map(|l| l.epoch).unwrap_or(0)
    }

    fn log_slices(&self) -> Vec<&[PersistEvent]> {
        self.logs.iter().map(|l| l.events.as_slice()).collect()
    }

    /// Every legal crash selection of the current pending set, up to `limit`.
    pub fn legal_cuts(&self, limit: usize) -> Option<Vec<BTreeSet<u64>>> {
        enumerate_legal_cuts(&self.log_slices(), limit)
    }

    /// Resolves a selector against the current pending set.
    pub fn resolve(&self, selector: &CrashSelector) -> Result<BTreeSet<u64>, PMemError> {
        let logs = self.log_slices();
        Ok(match selector {
            CrashSelector::All => self.pending().iter().map(|e| e.stamp).collect(),
            CrashSelector::None => BTreeSet::new(),
            CrashSelector::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                random_cut(&logs, &mut rng)
            }
            CrashSelector::Explicit(set) => {
                is_legal_cut(&logs, set)?;
                set.clone()
            }
        })
    }

    /// Image the persistent image would hold if `selection` persisted.
    pub fn image_for(&self, selection: &BTreeSet<u64>) -> Vec<u64> {
        let mut image = self.persistent.clone();
        for ev in self.pending() {
            if selection.contains(&ev.stamp) {
                let base = ev.line.first_word().0;
                image[base..base + WORDS_PER_LINE].copy_from_slice(&ev.snapshot);
            }
        }
        image
    }

    /// Simulates a full-system crash and restart.
    pub fn crash(&mut self, selector: &CrashSelector) -> Result<CrashOutcome, PMemError> {
        let selection = self.resolve(selector)?;
        let mut image = self.image_for(&selection);
        if let EvictionMode::Relaxed { seed } = self.mode {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ self.crashes.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            for line in 0..self.layout.lines() {
                let l = LineAddr(line);
                let r = l.first_word().0..l.first_word().0 + WORDS_PER_LINE;
                if self.layout.is_volatile(l) || image[r.clone()] == self.volatile[r.clone()] {
                    continue;
                }
                if rng.gen_bool(0.5) {
                    image[r.clone()].copy_from_slice(&self.volatile[r]);
                }
            }
        }
        for line in 0..self.layout.lines() {
            if self.layout.is_volatile(LineAddr(line)) {
                let base = line * WORDS_PER_LINE;
                image[base..base + WORDS_PER_LINE].fill(0);
            }
        }
        self.persistent.clone_from(&image);
        self.volatile.clone_from(&image);
        self.word_deps.fill(0);
        for log in &mut self.logs {
            log.events.clear();
            log.seen.fill(0);
        }
        self.crashes += 1;
        self.clock += 1;
        Ok(CrashOutcome {
            persisted_image: image,
            selection,
        })
    }

    pub fn crashes(&self) -> u64 {
        self.crashes
    }

    pub fn stats(&self) -> &PersistStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = PersistStats::new();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem(lines: usize) -> PMem {
        let mut b = LayoutBuilder::new();
        b.persistent("data", lines);
        b.volatile("lock", 1);
        PMem::new(b.build(), 2)
    }

    #[test]
    fn read_your_write() {
        let mut m = mem(2);
        m.write(0, WordAddr(3), 7).unwrap();
        assert_eq!(m.read(0, WordAddr(3)).unwrap(), 7);
    }

    #[test]
    fn plain_writes_never_persist() {
        let mut m = mem(2);
        m.write(0, WordAddr(3), 7).unwrap();
        let out = m.crash(&CrashSelector::All).unwrap();
        assert_eq!(out.persisted_image[3], 0);
        assert_eq!(m.peek(WordAddr(3)).unwrap(), 0);
    }

    #[test]
    fn last_writer_wins() {
        let mut m = mem(1);
        m.write(0, WordAddr(0), 1).unwrap();
        let s1 = m.clock();
        m.write(1, WordAddr(0), 2).unwrap();
        assert!(m.clock() > s1);
        assert_eq!(m.peek(WordAddr(0)).unwrap(), 2);
    }

    #[test]
    fn out_of_range_faults() {
        let mut m = mem(1);
        assert!(matches!(
            m.write(0, WordAddr(1000), 1),
            Err(PMemError::OutOfRange { .. })
        ));
        assert!(m.read(0, WordAddr(1000)).is_err());
        assert!(matches!(
            m.write(5, WordAddr(0), 1),
            Err(PMemError::UnknownThread { .. })
        ));
    }

    #[test]
    fn pwb_psync_guarantees_persistence() {
        let mut m = mem(1);
        m.write(0, WordAddr(1), 5).unwrap();
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        m.psync(0, Site::Test);
        assert!(m.pending_of(0).is_empty());
        let out = m.crash(&CrashSelector::None).unwrap();
        assert_eq!(out.persisted_image[1], 5);
    }

    #[test]
    fn unfenced_pwb_may_be_lost() {
        let mut m = mem(1);
        m.write(0, WordAddr(1), 5).unwrap();
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        let out = m.crash(&CrashSelector::None).unwrap();
        assert_eq!(out.persisted_image[1], 0);
    }

    #[test]
    fn snapshot_is_taken_at_issue() {
        let mut m = mem(1);
        m.write(0, WordAddr(0), 1).unwrap();
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        m.write(0, WordAddr(0), 2).unwrap();
        m.psync(0, Site::Test);
        assert_eq!(m.persisted_word(WordAddr(0)).unwrap(), 1);
        assert_eq!(m.peek(WordAddr(0)).unwrap(), 2);
    }

    #[test]
    fn pwb_on_volatile_line_is_a_violation() {
        let mut m = mem(1);
        let err = m.pwb(0, LineAddr(1), Site::Test).unwrap_err();
        assert!(matches!(err, PMemError::VolatilePwb { ref region, .. } if region == "lock"));
    }

    #[test]
    fn crash_resets_volatile_region() {
        let mut m = mem(1);
        m.write(0, WordAddr(8), 3).unwrap();
        m.crash(&CrashSelector::All).unwrap();
        assert_eq!(m.peek(WordAddr(8)).unwrap(), 0);
    }

    #[test]
    fn crash_all_applies_every_pending_snapshot() {
        let mut m = mem(3);
        for l in 0..3 {
            m.write(0, LineAddr(l).first_word(), l as u64 + 10).unwrap();
            m.pwb(0, LineAddr(l), Site::Test).unwrap();
        }
        let out = m.crash(&CrashSelector::All).unwrap();
        for l in 0..3 {
            assert_eq!(out.persisted_image[l * 8], l as u64 + 10);
        }
        assert_eq!(out.selection.len(), 3);
    }

    #[test]
    fn psync_on_empty_log_only_counts() {
        let mut m = mem(1);
        m.psync(0, Site::Test);
        assert_eq!(
            m.stats().total(),
            Counts {
                pwb: 0,
                pfence: 0,
                psync: 1
            }
        );
        assert_eq!(m.persistent_image(), m.volatile_image());
    }

    #[test]
    fn pfence_advances_epoch_only() {
        let mut m = mem(1);
        m.pfence(0, Site::Test);
        assert_eq!(m.epoch(0), 1);
        assert!(m.pending().is_empty());
    }

    #[test]
    fn counters_after_mixed_program() {
        let mut m = mem(2);
        assert_eq!(m.stats().total(), Counts::default());
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        m.pwb(0, LineAddr(1), Site::Test).unwrap();
        m.pwb(1, LineAddr(0), Site::CombState).unwrap();
        m.pfence(0, Site::Test);
        m.psync(1, Site::CombSync);
        assert_eq!(
            m.stats().total(),
            Counts {
                pwb: 3,
                pfence: 1,
                psync: 1
            }
        );
    }

    #[test]
    fn explicit_illegal_cut_is_rejected() {
        let mut m = mem(2);
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        let e1 = m.clock();
        m.pfence(0, Site::Test);
        m.pwb(0, LineAddr(1), Site::Test).unwrap();
        let e2 = m.clock();
        let bad: BTreeSet<u64> = [e2].into_iter().collect();
        let err = m.crash(&CrashSelector::Explicit(bad)).unwrap_err();
        assert!(
            matches!(err, PMemError::IllegalCut(CutViolation::EpochPrefix { .. })),
            "{err}"
        );
        let good: BTreeSet<u64> = [e1, e2].into_iter().collect();
        assert!(m.crash(&CrashSelector::Explicit(good)).is_ok());
    }

    #[test]
    fn psync_supersedes_older_foreign_writebacks() {
        let mut m = mem(1);
        m.write(0, WordAddr(0), 1).unwrap();
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        m.write(1, WordAddr(0), 2).unwrap();
        m.pwb(1, LineAddr(0), Site::Test).unwrap();
        m.psync(1, Site::Test);
        assert!(m.pending_of(0).is_empty());
        let out = m.crash(&CrashSelector::All).unwrap();
        assert_eq!(out.persisted_image[0], 2);
    }

    #[test]
    fn fenced_store_orders_readers_writebacks() {
        // Thread 0: pwb(L0); pfence; store flag. Thread 1 reads flag, pwb(L1).
        let mut m = mem(2);
        m.write(0, WordAddr(0), 1).unwrap();
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        let e0 = m.clock();
        m.pfence(0, Site::Test);
        m.write(0, WordAddr(9), 1).unwrap();
        assert_eq!(m.read(1, WordAddr(9)).unwrap(), 1);
        m.pwb(1, LineAddr(1), Site::Test).unwrap();
        let e1 = m.clock();
        let only_reader: BTreeSet<u64> = [e1].into_iter().collect();
        assert!(matches!(
            m.resolve(&CrashSelector::Explicit(only_reader)),
            Err(PMemError::IllegalCut(CutViolation::Causal { .. }))
        ));
        m.psync(1, Site::Test);
        assert!(m.pending().is_empty(), "psync drains what the reader depends on");
        assert_eq!(m.persisted_word(WordAddr(0)).unwrap(), 1);
        let _ = e0;
    }

    #[test]
    fn unfenced_store_carries_no_order() {
        let mut m = mem(2);
        m.pwb(0, LineAddr(0), Site::Test).unwrap();
        m.write(0, WordAddr(9), 1).unwrap();
        m.read(1, WordAddr(9)).unwrap();
        m.pwb(1, LineAddr(1), Site::Test).unwrap();
        m.psync(1, Site::Test);
        assert_eq!(m.pending_of(0).len(), 1);
    }

    #[test]
    fn relaxed_mode_can_persist_without_pwb() {
        let mut seen = false;
        for seed in 0..16 {
            let mut b = LayoutBuilder::new();
            b.persistent("d", 1);
            let mut m = PMem::with_mode(b.build(), 1, EvictionMode::Relaxed { seed });
            m.write(0, WordAddr(0), 9).unwrap();
            let out = m.crash(&CrashSelector::None).unwrap();
            seen |= out.persisted_image[0] == 9;
        }
        assert!(seen);
    }
}
