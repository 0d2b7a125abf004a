//! Persistence-instruction counters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

/// Instrumentation label attached to every persistence call site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    /// Writing the initial image of an instance.
    Init,
    /// Blocking combiner: pwb of the announce array.
    CombRequest,
    /// Blocking combiner: pwb of the state record it served into.
    CombState,
    /// Blocking combiner: pfence between the record and the index.
    CombFence,
    /// Blocking combiner: pwb of the state index.
    CombIndex,
    /// Blocking combiner: final psync.
    CombSync,
    /// Wait-free combiner: pwb of the announce array.
    WfRequest,
    /// Wait-free combiner: pwb of its private record.
    WfRecord,
    /// Wait-free combiner: pfence before the flush handshake.
    WfFence,
    /// Wait-free combiner: pwb of S after a successful SC.
    WfPwbS,
    /// Wait-free combiner: psync after pwb of S.
    WfSyncS,
    /// Help path: pwb of S observed with an odd flush counter.
    WfHelpPwbS,
    /// Help path: psync after the helper's pwb of S.
    WfHelpSyncS,
    /// Linked-structure nodes touched by a combine (toPersist / newItems).
    Nodes,
    /// Enqueue-side connection link of the wait-free queue.
    Link,
    /// Helping persist the enqueue-side S before linking its batch.
    ConnectPwbS,
    /// psync that accompanies [`Site::ConnectPwbS`].
    ConnectSync,
    /// Global-lock baseline: state lines.
    BaselineState,
    /// Global-lock baseline: per-thread log line.
    BaselineLog,
    /// Global-lock baseline: pfence.
    BaselineFence,
    /// Global-lock baseline: psync.
    BaselineSync,
    /// Free-form label used by tests and hand-written programs.
    Test,
}

impl Site {
    pub const ALL: [Site; 22] = [
        Site::Init,
        Site::CombRequest,
        Site::CombState,
        Site::CombFence,
        Site::CombIndex,
        Site::CombSync,
        Site::WfRequest,
        Site::WfRecord,
        Site::WfFence,
        Site::WfPwbS,
        Site::WfSyncS,
        Site::WfHelpPwbS,
        Site::WfHelpSyncS,
        Site::Nodes,
        Site::Link,
        Site::ConnectPwbS,
        Site::ConnectSync,
        Site::BaselineState,
        Site::BaselineLog,
        Site::BaselineFence,
        Site::BaselineSync,
        Site::Test,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Site::Init => "init",
            Site::CombRequest => "comb.pwb_request",
            Site::CombState => "comb.pwb_state",
            Site::CombFence => "comb.pfence",
            Site::CombIndex => "comb.pwb_index",
            Site::CombSync => "comb.psync",
            Site::WfRequest => "wf.pwb_request",
            Site::WfRecord => "wf.pwb_record",
            Site::WfFence => "wf.pfence",
            Site::WfPwbS => "wf.pwb_s",
            Site::WfSyncS => "wf.psync",
            Site::WfHelpPwbS => "wf.help_pwb_s",
            Site::WfHelpSyncS => "wf.help_psync",
            Site::Nodes => "nodes.pwb",
            Site::Link => "queue.pwb_link",
            Site::ConnectPwbS => "queue.connect_pwb_s",
            Site::ConnectSync => "queue.connect_psync",
            Site::BaselineState => "baseline.pwb_state",
            Site::BaselineLog => "baseline.pwb_log",
            Site::BaselineFence => "baseline.pfence",
            Site::BaselineSync => "baseline.psync",
            Site::Test => "test",
        }
    }
}

/// One (pwb, pfence, psync) triple.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Counts {
    pub pwb: u64,
    pub pfence: u64,
    pub psync: u64,
}

impl Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            pwb: self.pwb + o.pwb,
            pfence: self.pfence + o.pfence,
            psync: self.psync + o.psync,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Instr {
    Pwb,
    Pfence,
    Psync,
}

/// Snapshot of all persistence counters, keyed by thread and by call site.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PersistStats {
    per_site: BTreeMap<(Site, usize), Counts>,
}

impl PersistStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn record(&mut self, thread: usize, site: Site, instr: Instr) {
        let c = self.per_site.entry((site, thread)).or_default();
        match instr {
            Instr::Pwb => c.pwb += 1,
            Instr::Pfence => c.pfence += 1,
            Instr::Psync => c.psync += 1,
        }
    }

    /// Builds a snapshot from raw per-(site, thread) counts.
    pub fn from_entries(entries: impl IntoIterator<Item = ((Site, usize), Counts)>) -> Self {
        let mut per_site = BTreeMap::new();
        for (k, c) in entries {
            if c != Counts::default() {
                *per_site.entry(k).or_default() += c;
            }
        }
        PersistStats { per_site }
    }

    pub fn total(&self) -> Counts {
        self.per_site.values().fold(Counts::default(), |a, &c| a + c)
    }

    /// Totals excluding the given sites (typically [`Site::Init`]).
    pub fn total_excluding(&self, skip: &[Site]) -> Counts {
        self.per_site
            .iter()
            .filter(|((s, _), _)| !skip.contains(s))
            .fold(Counts::default(), |a, (_, &c)| a + c)
    }

    pub fn thread(&self, thread: usize) -> Counts {
        self.per_site
            .iter()
            .filter(|((_, t), _)| *t == thread)
            .fold(Counts::default(), |a, (_, &c)| a + c)
    }

    pub fn site(&self, site: Site) -> Counts {
        self.per_site
            .iter()
            .filter(|((s, _), _)| *s == site)
            .fold(Counts::default(), |a, (_, &c)| a + c)
    }

    pub fn per_thread(&self) -> BTreeMap<usize, Counts> {
        let mut out: BTreeMap<usize, Counts> = BTreeMap::new();
        for ((_, t), c) in &self.per_site {
            *out.entry(*t).or_default() += *c;
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (Site, usize, Counts)> + '_ {
        self.per_site.iter().map(|(&(s, t), &c)| (s, t, c))
    }

    /// Counter dump with columns `label,thread,pwb,pfence,psync`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,thread,pwb,pfence,psync\n");
        for (site, thread, c) in self.entries() {
            let _ = writeln!(out, "{},{},{},{},{}", site.label(), thread, c.pwb, c.pfence, c.psync);
        }
        out
    }
}
