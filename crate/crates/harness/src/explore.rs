//! Exhaustive and randomized exploration, crash-plan enumeration and suites.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use pcomb::Recoverable;

use crate::check::{check_detectable, check_linearizable, Verdict};
use crate::history::History;
use crate::oracle::Oracle;
use crate::world::{run_schedule, CrashPlan, Nested, Run, Schedule, Selector, Target, Trigger, World};

/// Judges a finished run: model violations first, then the history.
pub fn judge<O: Oracle>(run: &Run, oracle: &O, schedule: &Schedule, plan: Option<&CrashPlan>) -> Verdict {
    let mut v = if let Some(first) = run.violations.first() {
        let mut v = Verdict::fail("invariant", first.clone(), &run.history);
        v.message = run.violations.join("; ");
        v
    } else if run.history.crashes() == 0 {
        match check_linearizable(&run.history, oracle) {
            Ok(v) => v,
            Err(_) => check_detectable(&run.history, oracle, Some(&run.view)),
        }
    } else {
        check_detectable(&run.history, oracle, Some(&run.view))
    };
    if !v.pass {
        v.replay = Some(serde_json::json!({ "schedule": schedule, "plan": plan, "trace": run.trace }));
        v.pmem_log = run.pmem_log.clone();
    }
    v
}

/// Aggregate of many checked runs.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub runs: usize,
    pub failed: usize,
    /// The first few failing verdicts.
    pub failures: Vec<Verdict>,
    /// Largest per-operation step counts, fresh and recovering.
    pub max_op_steps: [usize; 2],
}

impl SuiteReport {
    const KEEP: usize = 3;

    fn add(&mut self, v: Verdict, run: &Run) {
        self.runs += 1;
        self.max_op_steps[0] = self.max_op_steps[0].max(run.max_op_steps[0]);
        self.max_op_steps[1] = self.max_op_steps[1].max(run.max_op_steps[1]);
        if !v.pass {
            self.failed += 1;
            if self.failures.len() < Self::KEEP {
                self.failures.push(v);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

/// `runs` crash-free random schedules seeded from `seed`.
pub fn random_suite<R: Recoverable, O: Oracle>(target: &Target<R>, oracle: &O, runs: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..runs {
        let s = Schedule::random(rng.gen());
        let run = run_schedule(target, &s, None);
        let v = judge(&run, oracle, &s, None);
        report.add(v, &run);
    }
    report
}

/// Outcome of exploring every interleaving.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExploreReport {
    pub states: usize,
    pub histories: usize,
    pub failures: Vec<Verdict>,
    pub truncated: bool,
}

/// Depth-first search over all crash-free interleavings, deduplicating worlds
/// with identical memory, thread states and history. Every distinct complete
/// history is checked for linearizability.
pub fn explore<R: Recoverable, O: Oracle>(target: &Target<R>, oracle: &O, max_states: usize) -> ExploreReport {
    let mut report = ExploreReport::default();
    let mut seen = HashSet::new();
    let mut checked = HashSet::new();
    let mut stack = vec![(World::new(target), Vec::<usize>::new())];
    while let Some((w, trace)) = stack.pop() {
        if !seen.insert(w.state_key()) {
            continue;
        }
        report.states += 1;
        if report.states > max_states {
            report.truncated = true;
            break;
        }
        if !w.violations.is_empty() {
            let mut v = Verdict::fail("invariant", w.violations.join("; "), &w.history);
            v.replay = Some(serde_json::json!({ "trace": trace }));
            report.failures.push(v);
            continue;
        }
        if w.done() {
            if checked.insert(w.history.shape()) {
                report.histories += 1;
                let v = check_linearizable(&w.history, oracle)
                    .unwrap_or_else(|e| Verdict::fail("size", e.to_string(), &w.history));
                if !v.pass {
                    let mut v = v;
                    v.replay = Some(serde_json::json!({ "trace": trace }));
                    report.failures.push(v);
                }
            }
            continue;
        }
        let en = w.enabled_threads();
        if en.is_empty() {
            report.failures.push(Verdict::fail("progress", "deadlock", &w.history));
            continue;
        }
        for t in en {
            let mut next = w.clone();
            next.step(t);
            let mut tr = trace.clone();
            tr.push(t);
            stack.push((next, tr));
        }
    }
    report
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EnumerateError {
    #[error(
        "crash enumeration supports at most 3 threads and 2 operations per thread (got {threads} threads, {ops} ops)"
    )]
    Bounds { threads: usize, ops: usize },
}

/// What to enumerate besides the all/none crash at every step.
#[derive(Clone, Copy, Debug)]
pub struct EnumConfig {
    /// Explicit legal cuts of the pending write-backs after persistence instructions.
    pub cuts: bool,
    /// Upper bound on enumerated cuts per point; beyond it random cuts are sampled.
    pub cut_limit: usize,
    /// Also emit each plan with a nested crash during recovery.
    pub nested: bool,
    pub seed: u64,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig {
            cuts: true,
            cut_limit: 64,
            nested: true,
            seed: 0,
        }
    }
}

impl EnumConfig {
    /// Only the all/none crash at every step.
    pub fn plain() -> Self {
        EnumConfig {
            cuts: false,
            nested: false,
            ..EnumConfig::default()
        }
    }
}

/// Crash plans for one base schedule: a crash after every step with both the
/// maximal and minimal selection, then (if configured) every legal cut at the
/// points where the pending write-backs or the history changed, and a nested
/// variant of each plan.
pub fn enumerate_crash_points<R: Recoverable>(
    target: &Target<R>,
    base: &Schedule,
    cfg: &EnumConfig,
) -> Result<Vec<CrashPlan>, EnumerateError> {
    let max_ops = target.ops.iter().map(Vec::len).max().unwrap_or(0);
    if target.threads() > 3 || max_ops > 2 {
        return Err(EnumerateError::Bounds {
            threads: target.threads(),
            ops: max_ops,
        });
    }
    let run = run_schedule(target, base, None);
    let mut plans = Vec::new();
    for k in 1..=run.steps {
        for sel in [Selector::All, Selector::None] {
            plans.push(CrashPlan {
                trigger: Trigger::Step(k),
                selector: sel,
                nested: None,
            });
        }
    }
    if cfg.cuts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ base.seed);
        let mut w = World::new(target);
        let mut last_key = (Default::default(), 0usize);
        let sched = Schedule::threads(&run.trace, base.seed);
        for (k, d) in sched.prefix.iter().enumerate() {
            let crate::world::Directive::Thread(t) = d else {
                unreachable!()
            };
            w.step(*t);
            let pending = w.pending();
            let key = (pending.clone(), w.history.len());
            if key == last_key || pending.is_empty() {
                last_key = key;
                continue;
            }
            last_key = key;
            let cuts = w.mem.with_pmem(|p| p.legal_cuts(cfg.cut_limit));
            let sels: Vec<Selector> = match cuts {
                Some(cuts) => cuts
                    .into_iter()
                    .filter(|c| !c.is_empty() && c.len() < pending.len())
                    .map(|c| Selector::Explicit(c.into_iter().collect()))
                    .collect(),
                None => (0..cfg.cut_limit).map(|_| Selector::Random(rng.gen())).collect(),
            };
            for sel in sels {
                plans.push(CrashPlan {
                    trigger: Trigger::Step(k + 1),
                    selector: sel,
                    nested: None,
                });
            }
        }
    }
    if cfg.nested {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(base.seed).wrapping_add(1));
        let extra: Vec<CrashPlan> = plans
            .iter()
            .map(|p| CrashPlan {
                nested: Some(Nested {
                    after: rng.gen_range(0..12),
                    selector: if rng.gen() { Selector::All } else { Selector::None },
                }),
                ..p.clone()
            })
            .collect();
        plans.extend(extra);
    }
    Ok(plans)
}

/// Runs every plan of every base schedule and judges each run.
pub fn crash_suite<R: Recoverable, O: Oracle>(
    target: &Target<R>,
    oracle: &O,
    bases: &[Schedule],
    cfg: &EnumConfig,
) -> Result<SuiteReport, EnumerateError> {
    let mut report = SuiteReport::default();
    for base in bases {
        for plan in enumerate_crash_points(target, base, cfg)? {
            let run = run_schedule(target, base, Some(&plan));
            let v = judge(&run, oracle, base, Some(&plan));
            report.add(v, &run);
        }
    }
    Ok(report)
}

/// A crash after every step of one schedule with the maximal and minimal
/// selection. Unlike [`crash_suite`] this has no bounds on the workload.
pub fn crash_every_step<R: Recoverable, O: Oracle>(target: &Target<R>, oracle: &O, base: &Schedule) -> SuiteReport {
    let mut report = SuiteReport::default();
    let steps = run_schedule(target, base, None).steps;
    for k in 1..=steps {
        for selector in [Selector::All, Selector::None] {
            let plan = CrashPlan {
                trigger: Trigger::Step(k),
                selector,
                nested: None,
            };
            let run = run_schedule(target, base, Some(&plan));
            report.add(judge(&run, oracle, base, Some(&plan)), &run);
        }
    }
    report
}

/// Sequential, alternating and `random` seeded base schedules.
pub fn base_schedules(threads: usize, random: usize, seed: u64) -> Vec<Schedule> {
    let mut out = vec![Schedule::random(seed)];
    let mut seq = Vec::new();
    for t in 0..threads {
        seq.extend(std::iter::repeat_n(t, 400));
    }
    out.push(Schedule::threads(&seq, seed));
    let rr: Vec<usize> = (0..1200).map(|i| i % threads).collect();
    out.push(Schedule::threads(&rr, seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..random).map(|_| Schedule::random(rng.gen())));
    out
}

/// History of the first failing run, for reports.
pub fn first_failure(report: &SuiteReport) -> Option<&History> {
    report.failures.first().and_then(|v| v.history.as_ref())
}
