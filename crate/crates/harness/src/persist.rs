//! A regression set of small persistency programs and a brute-force check of
//! the crash images the emulator can produce for them.

use std::collections::{BTreeSet, HashSet};

use pcomb::pmem::{CrashSelector, LayoutBuilder, LineAddr, PMem, PersistEvent, Site, WordAddr, WORDS_PER_LINE};

/// Largest pending set the brute-force oracle enumerates.
pub const MAX_EVENTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instr {
    Write { t: usize, line: usize, off: usize, v: u64 },
    Read { t: usize, line: usize, off: usize },
    Pwb { t: usize, line: usize },
    Pfence(usize),
    Psync(usize),
}

#[derive(Clone, Debug)]
pub struct Program {
    pub name: &'static str,
    pub threads: usize,
    /// Persistent lines; one volatile line follows them.
    pub lines: usize,
    pub instrs: Vec<Instr>,
}

impl Program {
    fn pmem(&self) -> PMem {
        let mut b = LayoutBuilder::new();
        b.persistent("data", self.lines);
        b.volatile("scratch", 1);
        PMem::new(b.build(), self.threads)
    }

    pub fn volatile_line(&self) -> usize {
        self.lines
    }

    pub fn persist_events(&self) -> usize {
        self.instrs.iter().filter(|i| matches!(i, Instr::Pwb { .. })).count()
    }
}

fn w(t: usize, line: usize, off: usize, v: u64) -> Instr {
    Instr::Write { t, line, off, v }
}

fn r(t: usize, line: usize, off: usize) -> Instr {
    Instr::Read { t, line, off }
}

fn pwb(t: usize, line: usize) -> Instr {
    Instr::Pwb { t, line }
}

use Instr::{Pfence, Psync};

pub fn regression_set() -> Vec<Program> {
    vec![
        Program {
            name: "no-writeback",
            threads: 1,
            lines: 2,
            instrs: vec![w(0, 0, 0, 5), w(0, 1, 3, 6), Pfence(0), Psync(0), w(0, 2, 0, 9)],
        },
        Program {
            name: "single-unfenced",
            threads: 1,
            lines: 1,
            instrs: vec![w(0, 0, 0, 7), pwb(0, 0)],
        },
        Program {
            name: "fence-chain",
            threads: 1,
            lines: 2,
            instrs: vec![w(0, 0, 0, 1), pwb(0, 0), Pfence(0), w(0, 1, 0, 2), pwb(0, 1)],
        },
        Program {
            name: "snapshot-at-issue",
            threads: 1,
            lines: 1,
            instrs: vec![w(0, 0, 0, 1), pwb(0, 0), w(0, 0, 0, 2), Psync(0), pwb(0, 0)],
        },
        Program {
            name: "same-line-in-epoch",
            threads: 1,
            lines: 2,
            instrs: vec![
                w(0, 0, 0, 1),
                pwb(0, 0),
                w(0, 0, 1, 2),
                pwb(0, 0),
                w(0, 1, 0, 3),
                pwb(0, 1),
                w(0, 0, 2, 4),
                pwb(0, 0),
            ],
        },
        Program {
            name: "independent-threads",
            threads: 2,
            lines: 4,
            instrs: vec![
                w(0, 0, 0, 1),
                pwb(0, 0),
                w(1, 2, 0, 2),
                pwb(1, 2),
                Pfence(0),
                w(0, 1, 0, 3),
                pwb(0, 1),
                Pfence(1),
                w(1, 3, 0, 4),
                pwb(1, 3),
            ],
        },
        Program {
            name: "partial-psync",
            threads: 2,
            lines: 2,
            instrs: vec![w(0, 0, 0, 1), pwb(0, 0), w(1, 1, 0, 2), pwb(1, 1), Psync(0)],
        },
        Program {
            name: "fenced-flag",
            threads: 2,
            lines: 3,
            instrs: vec![
                w(0, 0, 0, 1),
                pwb(0, 0),
                Pfence(0),
                w(0, 1, 0, 1),
                r(1, 1, 0),
                w(1, 2, 0, 1),
                pwb(1, 2),
                pwb(0, 1),
            ],
        },
        Program {
            name: "shared-line",
            threads: 2,
            lines: 1,
            instrs: vec![
                w(0, 0, 0, 1),
                pwb(0, 0),
                w(1, 0, 1, 2),
                pwb(1, 0),
                Pfence(1),
                w(0, 0, 2, 3),
                pwb(0, 0),
                Psync(1),
            ],
        },
        Program {
            name: "eight-events",
            threads: 2,
            lines: 4,
            instrs: vec![
                w(0, 0, 0, 1),
                pwb(0, 0),
                w(0, 1, 0, 1),
                pwb(0, 1),
                Pfence(0),
                w(1, 2, 0, 2),
                pwb(1, 2),
                w(0, 0, 1, 3),
                pwb(0, 0),
                w(1, 3, 0, 4),
                pwb(1, 3),
                pwb(1, 2),
                w(0, 1, 1, 5),
                pwb(0, 1),
                w(1, 3, 1, 6),
                pwb(1, 3),
            ],
        },
        Program {
            name: "three-threads",
            threads: 3,
            lines: 3,
            instrs: vec![
                w(0, 0, 0, 1),
                pwb(0, 0),
                Pfence(0),
                w(0, 2, 0, 9),
                r(1, 2, 0),
                w(1, 1, 0, 2),
                pwb(1, 1),
                Pfence(1),
                w(1, 2, 1, 8),
                r(2, 2, 1),
                w(2, 2, 2, 3),
                pwb(2, 2),
                Psync(2),
            ],
        },
        Program {
            name: "volatile-scratch",
            threads: 1,
            lines: 1,
            instrs: vec![
                w(0, 1, 0, 4),
                w(0, 0, 0, 1),
                pwb(0, 0),
                r(0, 1, 0),
                Pfence(0),
                w(0, 1, 1, 5),
            ],
        },
    ]
}

/// Legal selections by brute force over every subset of the pending events.
fn oracle_cuts(pending: &[&PersistEvent]) -> Vec<BTreeSet<u64>> {
    assert!(pending.len() <= MAX_EVENTS, "{} pending events", pending.len());
    let legal = |mask: u32| {
        let sel = |i: usize| mask >> i & 1 == 1;
        pending.iter().enumerate().filter(|&(i, _)| sel(i)).all(|(_, e)| {
            pending.iter().enumerate().all(|(j, o)| {
                let same_thread_before = o.thread == e.thread && o.stamp < e.stamp;
                let required = (o.thread == e.thread && o.epoch < e.epoch)
                    || (same_thread_before && o.line == e.line)
                    || o.epoch < e.deps.get(o.thread).copied().unwrap_or(0);
                !required || sel(j)
            })
        })
    };
    (0..1u32 << pending.len())
        .filter(|&m| legal(m))
        .map(|m| {
            (0..pending.len())
                .filter(|&i| m >> i & 1 == 1)
                .map(|i| pending[i].stamp)
                .collect()
        })
        .collect()
}

/// Persistent image after applying `selection` in stamp order.
fn replay(base: &[u64], pending: &[&PersistEvent], selection: &BTreeSet<u64>) -> Vec<u64> {
    let mut img = base.to_vec();
    let mut chosen: Vec<&&PersistEvent> = pending.iter().filter(|e| selection.contains(&e.stamp)).collect();
    chosen.sort_by_key(|e| e.stamp);
    for e in chosen {
        let b = e.line.0 * WORDS_PER_LINE;
        img[b..b + WORDS_PER_LINE].copy_from_slice(&e.snapshot);
    }
    img
}

#[derive(Clone, Debug, Default)]
pub struct SoundnessReport {
    pub programs: usize,
    /// Program prefixes at which the crash check ran.
    pub states: usize,
    pub crashes: usize,
    pub max_pending: usize,
    pub violations: Vec<String>,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn step(p: &mut PMem, i: Instr) {
    let addr = |line: usize, off: usize| WordAddr(line * WORDS_PER_LINE + off);
    let res = match i {
        Instr::Write { t, line, off, v } => p.write(t, addr(line, off), v),
        Instr::Read { t, line, off } => p.read(t, addr(line, off)).map(|_| ()),
        Instr::Pwb { t, line } => p.pwb(t, LineAddr(line), Site::Test),
        Instr::Pfence(t) => {
            p.pfence(t, Site::Test);
            Ok(())
        }
        Instr::Psync(t) => {
            p.psync(t, Site::Test);
            Ok(())
        }
    };
    res.expect("regression programs stay in range");
}

/// Runs every program one instruction at a time. After each instruction the
/// log invariants are checked, the emulator's legal cuts are compared with the
/// brute-force set, and `trials` random crashes must each land on a legal
/// image that replaying the selection reproduces.
pub fn check_soundness(programs: &[Program], trials: usize, seed: u64) -> SoundnessReport {
    let mut rep = SoundnessReport {
        programs: programs.len(),
        ..Default::default()
    };
    for prog in programs {
        let mut p = prog.pmem();
        let initial = p.persistent_image().to_vec();
        for k in 0..=prog.instrs.len() {
            if k > 0 {
                step(&mut p, prog.instrs[k - 1]);
            }
            let mut bad = |msg: String| {
                rep.violations
                    .push(format!("{} after {k} instructions: {msg}", prog.name))
            };
            if let Some(Instr::Psync(t)) = k.checked_sub(1).map(|i| prog.instrs[i]) {
                if !p.pending_of(t).is_empty() {
                    bad(format!("thread {t} has pending write-backs right after psync"));
                }
            }
            for t in 0..prog.threads {
                let log = p.pending_of(t);
                if log
                    .windows(2)
                    .any(|w| w[0].epoch > w[1].epoch || w[0].stamp > w[1].stamp)
                {
                    bad(format!("thread {t}'s log is out of epoch order"));
                }
                if log.iter().any(|e| e.epoch > p.epoch(t)) {
                    bad(format!("thread {t} has an event from a future epoch"));
                }
            }
            let pending = p.pending();
            rep.max_pending = rep.max_pending.max(pending.len());
            if pending.len() > MAX_EVENTS {
                bad(format!("{} pending events exceed the oracle's limit", pending.len()));
                continue;
            }
            let legal: HashSet<BTreeSet<u64>> = oracle_cuts(&pending).into_iter().collect();
            let base = p.persistent_image().to_vec();
            let images: HashSet<Vec<u64>> = legal.iter().map(|s| replay(&base, &pending, s)).collect();
            match p.legal_cuts(1 << MAX_EVENTS) {
                Some(cuts) => {
                    let model: HashSet<BTreeSet<u64>> = cuts.into_iter().collect();
                    if model != legal {
                        bad(format!(
                            "emulator enumerates {} cuts, brute force finds {}",
                            model.len(),
                            legal.len()
                        ));
                    }
                }
                None => bad("emulator refused to enumerate".into()),
            }
            if prog.persist_events() == 0 && images != HashSet::from([initial.clone()]) {
                bad("an image differs from the initial one without any write-back".into());
            }
            rep.states += 1;
            for trial in 0..trials {
                let s = seed ^ ((k * trials + trial) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let mut c = p.clone();
                let out = match c.crash(&CrashSelector::Random(s)) {
                    Ok(o) => o,
                    Err(e) => {
                        bad(format!("random crash rejected: {e}"));
                        break;
                    }
                };
                rep.crashes += 1;
                if !legal.contains(&out.selection) {
                    bad(format!("random selection {:?} is not a legal cut", out.selection));
                    break;
                }
                if !images.contains(&out.persisted_image) {
                    bad("random crash produced an image outside the legal set".into());
                    break;
                }
                if out.persisted_image != replay(&base, &pending, &out.selection) {
                    bad("persisted image differs from replaying the selection".into());
                    break;
                }
                let v = prog.volatile_line() * WORDS_PER_LINE;
                if c.volatile_image()[v..v + WORDS_PER_LINE].iter().any(|&x| x != 0) {
                    bad("volatile line survived the crash".into());
                    break;
                }
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fence_chain_has_three_cuts() {
        let prog = &regression_set()[2];
        assert_eq!(prog.name, "fence-chain");
        let mut p = prog.pmem();
        for &i in &prog.instrs {
            step(&mut p, i);
        }
        let pending = p.pending();
        let cuts = oracle_cuts(&pending);
        let (e1, e2) = (pending[0].stamp, pending[1].stamp);
        let expect = [BTreeSet::new(), BTreeSet::from([e1]), BTreeSet::from([e1, e2])];
        assert_eq!(cuts.len(), 3);
        assert!(expect.iter().all(|c| cuts.contains(c)));
    }

    #[test]
    fn every_program_fits_the_oracle() {
        assert!(regression_set().iter().all(|p| p.persist_events() <= MAX_EVENTS));
    }

    #[test]
    fn regression_set_is_sound() {
        let rep = check_soundness(&regression_set(), 200, 3);
        assert!(rep.passed(), "{:?}", rep.violations);
        assert!(rep.max_pending >= 6);
    }
}
