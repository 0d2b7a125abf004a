//! Step-by-step execution of a workload with crash injection.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Once;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use pcomb::memory::{ModelMemory, ShadowEvent};
use pcomb::pmem::{CrashSelector, Layout, PMemError};
use pcomb::{Call, Recoverable, Step};

use crate::history::{Event, EventKind, History};

/// Steps after which a run is abandoned as non-terminating.
pub const STEP_LIMIT: usize = 200_000;

/// Serializable mirror of the pmem crash selector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    All,
    None,
    Random(u64),
    Explicit(Vec<u64>),
}

impl Selector {
    pub fn to_pmem(&self) -> CrashSelector {
        match self {
            Selector::All => CrashSelector::All,
            Selector::None => CrashSelector::None,
            Selector::Random(s) => CrashSelector::Random(*s),
            Selector::Explicit(v) => CrashSelector::Explicit(v.iter().copied().collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Thread(usize),
    Crash(Selector),
}

/// Explicit directives, then uniformly random choices among enabled threads.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    pub prefix: Vec<Directive>,
    pub seed: u64,
}

impl Schedule {
    pub fn random(seed: u64) -> Self {
        Schedule {
            prefix: Vec::new(),
            seed,
        }
    }

    pub fn threads(order: &[usize], seed: u64) -> Self {
        Schedule {
            prefix: order.iter().map(|&t| Directive::Thread(t)).collect(),
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// After this many scheduler steps.
    Step(usize),
    /// Immediately after the k-th pwb (1-based) of the run.
    AfterPwb(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Nested {
    /// Steps into recovery at which to crash again.
    pub after: usize,
    pub selector: Selector,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrashPlan {
    pub trigger: Trigger,
    pub selector: Selector,
    pub nested: Option<Nested>,
}

/// An object, its initialized memory and the operations each thread runs.
pub struct Target<R: Recoverable> {
    pub obj: R,
    pub init: ModelMemory,
    pub ops: Vec<Vec<(u64, u64)>>,
}

impl<R: Recoverable> Target<R> {
    pub fn new(obj: R, layout: Layout, ops: Vec<Vec<(u64, u64)>>) -> Self {
        let init = ModelMemory::from_layout(layout, obj.threads());
        obj.init(&init);
        init.reset_stats();
        assert_eq!(ops.len(), obj.threads(), "one operation list per thread");
        Target { obj, init, ops }
    }

    pub fn threads(&self) -> usize {
        self.ops.len()
    }

    pub fn total_ops(&self) -> usize {
        self.ops.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Active<Mc> {
    call: Call,
    machine: Mc,
    recovering: bool,
    steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Ctx<Mc> {
    next: usize,
    seq: u64,
    active: Option<Active<Mc>>,
}

/// Result of advancing one thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepped {
    Skipped,
    Progress,
    Responded(u64),
}

/// A running execution.
pub struct World<'t, R: Recoverable> {
    target: &'t Target<R>,
    pub mem: ModelMemory,
    ctx: Vec<Ctx<R::Machine>>,
    pub history: History,
    pub steps: usize,
    pub violations: Vec<String>,
    pub notes: Vec<String>,
    pub pmem_log: Vec<String>,
    /// Largest per-operation step count seen, split by fresh / recovering.
    pub max_op_steps: [usize; 2],
    shadow_seen: usize,
}

impl<R: Recoverable> Clone for World<'_, R> {
    fn clone(&self) -> Self {
        World {
            target: self.target,
            mem: self.mem.clone(),
            ctx: self.ctx.clone(),
            history: self.history.clone(),
            steps: self.steps,
            violations: self.violations.clone(),
            notes: self.notes.clone(),
            pmem_log: self.pmem_log.clone(),
            max_op_steps: self.max_op_steps,
            shadow_seen: self.shadow_seen,
        }
    }
}

impl<'t, R: Recoverable> World<'t, R> {
    pub fn new(target: &'t Target<R>) -> Self {
        World {
            target,
            mem: target.init.clone(),
            ctx: (0..target.threads())
                .map(|_| Ctx {
                    next: 0,
                    seq: 0,
                    active: None,
                })
                .collect(),
            history: History::default(),
            steps: 0,
            violations: Vec::new(),
            notes: Vec::new(),
            pmem_log: Vec::new(),
            max_op_steps: [0; 2],
            shadow_seen: 0,
        }
    }

    pub fn obj(&self) -> &R {
        &self.target.obj
    }

    pub fn enabled(&self, t: usize) -> bool {
        let c = &self.ctx[t];
        match &c.active {
            Some(a) => self.target.obj.enabled(t, &a.machine, &self.mem),
            None => c.next < self.target.ops[t].len(),
        }
    }

    pub fn enabled_threads(&self) -> Vec<usize> {
        (0..self.ctx.len()).filter(|&t| self.enabled(t)).collect()
    }

    pub fn done(&self) -> bool {
        self.ctx
            .iter()
            .zip(&self.target.ops)
            .all(|(c, ops)| c.active.is_none() && c.next == ops.len())
    }

    /// True while some thread is inside a recovery function.
    pub fn recovering(&self) -> bool {
        self.ctx.iter().any(|c| c.active.as_ref().is_some_and(|a| a.recovering))
    }

    pub fn step(&mut self, t: usize) -> Stepped {
        if t >= self.ctx.len() {
            self.notes.push(format!("step {}: no thread {t}", self.steps));
            return Stepped::Skipped;
        }
        if self.ctx[t].active.is_none() {
            let c = &mut self.ctx[t];
            let Some(&(func, arg)) = self.target.ops[t].get(c.next) else {
                self.notes
                    .push(format!("step {}: thread {t} has finished; skipped", self.steps));
                return Stepped::Skipped;
            };
            c.seq += 1;
            let call = Call::new(func, arg, c.seq);
            self.history.push(Event::call(self.steps, t, EventKind::Invoke, &call));
            c.active = Some(Active {
                machine: self.target.obj.invoke(t, call),
                call,
                recovering: false,
                steps: 0,
            });
        } else if !self.enabled(t) {
            self.notes
                .push(format!("step {}: thread {t} is blocked; skipped", self.steps));
            return Stepped::Skipped;
        }
        let obj = &self.target.obj;
        let a = self.ctx[t].active.as_mut().expect("active");
        let r = obj.step(t, &mut a.machine, &self.mem);
        self.steps += 1;
        a.steps += 1;
        let rec = a.recovering as usize;
        self.max_op_steps[rec] = self.max_op_steps[rec].max(a.steps);
        if let Some(bound) = obj.step_bound(a.recovering) {
            if a.steps > bound {
                self.violations.push(format!(
                    "wait-freedom: thread {t} op seq {} exceeded {bound} steps",
                    a.call.seq
                ));
            }
        }
        let out = match r {
            Step::Done(v) => {
                let (seq, kind) = (
                    a.call.seq,
                    if a.recovering {
                        EventKind::RecoverRespond
                    } else {
                        EventKind::Respond
                    },
                );
                self.ctx[t].active = None;
                self.ctx[t].next += 1;
                self.history.push(Event::response(self.steps, t, kind, seq, v));
                if let Err(e) = obj.audit(&self.mem, false) {
                    self.violations.push(format!("after response of thread {t}: {e}"));
                }
                Stepped::Responded(v)
            }
            Step::Progress | Step::Blocked => Stepped::Progress,
        };
        self.collect_shadow();
        out
    }

    fn collect_shadow(&mut self) {
        if self.mem.shadow_len() == self.shadow_seen {
            return;
        }
        let log = self.mem.shadow_log();
        for (t, e) in &log[self.shadow_seen..] {
            if let ShadowEvent::Violation(m) = e {
                self.violations.push(format!("thread {t}: {m}"));
            }
        }
        self.shadow_seen = log.len();
        let faults = self.mem.faults();
        if !faults.is_empty() && !self.violations.iter().any(|v| v.starts_with("memory fault")) {
            self.violations.push(format!("memory fault: {}", faults[0]));
        }
    }

    pub fn crash(&mut self, sel: &Selector) -> Result<(), PMemError> {
        let pending: Vec<String> = self.mem.with_pmem(|p| {
            p.pending()
                .iter()
                .map(|e| format!("t{} line {} epoch {} stamp {}", e.thread, e.line.0, e.epoch, e.stamp))
                .collect()
        });
        let out = self.mem.crash(&sel.to_pmem())?;
        self.pmem_log.push(format!(
            "crash at step {} ({sel:?}): pending [{}], persisted {:?}",
            self.steps,
            pending.join("; "),
            out.selection
        ));
        self.history.push(Event::crash(self.steps));
        let obj = &self.target.obj;
        for (t, c) in self.ctx.iter_mut().enumerate() {
            if let Some(a) = c.active.as_mut() {
                self.history
                    .push(Event::call(self.steps, t, EventKind::RecoverInvoke, &a.call));
                a.machine = obj.recover(t, a.call);
                a.recovering = true;
                a.steps = 0;
            }
        }
        if let Err(e) = obj.audit(&self.mem, true) {
            self.violations.push(format!("after crash at step {}: {e}", self.steps));
        }
        Ok(())
    }

    /// Abstract state of the object in the current image.
    pub fn view(&self) -> Vec<u64> {
        self.target.obj.dump(&self.mem)
    }

    /// Hash of everything that determines future behaviour and the history so far.
    pub fn state_key(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.mem.with_pmem(|p| p.volatile_image().hash(&mut h));
        self.ctx.hash(&mut h);
        self.history.shape().hash(&mut h);
        h.finish()
    }

    /// Stamps of write-backs not yet persisted.
    pub fn pending(&self) -> BTreeSet<u64> {
        self.mem.with_pmem(|p| p.pending().iter().map(|e| e.stamp).collect())
    }
}

/// Completed execution.
pub struct Run {
    pub history: History,
    /// Thread chosen at each step.
    pub trace: Vec<usize>,
    pub view: Vec<u64>,
    pub violations: Vec<String>,
    pub notes: Vec<String>,
    pub pmem_log: Vec<String>,
    pub steps: usize,
    pub max_op_steps: [usize; 2],
    pub mem: ModelMemory,
}

impl fmt::Debug for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Run")
            .field("steps", &self.steps)
            .field("view", &self.view)
            .field("violations", &self.violations)
            .finish()
    }
}

thread_local! {
    static QUIET: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f`, turning a panic into its message. The panic is not printed.
fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    static HOOK: Once = Once::new();
    HOOK.call_once(|| {
        let prev = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            if !QUIET.with(Cell::get) {
                prev(info);
            }
        }));
    });
    QUIET.with(|q| q.set(true));
    let r = panic::catch_unwind(AssertUnwindSafe(f));
    QUIET.with(|q| q.set(false));
    r.map_err(|e| {
        e.downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| e.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "non-string panic".into())
    })
}

/// Runs `target` under `schedule`, crashing as `plan` directs, until every
/// thread has finished its operations.
pub fn run_schedule<R: Recoverable>(target: &Target<R>, schedule: &Schedule, plan: Option<&CrashPlan>) -> Run {
    let mut w = World::new(target);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut trace = Vec::new();
    let mut pos = 0;
    let mut fired = false;
    let mut since_crash: Option<usize> = None;
    let mut nested_fired = false;
    let crash = |w: &mut World<'_, R>, sel: &Selector| {
        if let Err(e) = w.crash(sel) {
            w.violations.push(format!("crash rejected: {e}"));
        }
    };
    loop {
        if let Some(p) = plan {
            if !fired {
                let hit = match p.trigger {
                    Trigger::Step(k) => w.steps == k,
                    Trigger::AfterPwb(k) => w.mem.stats().total().pwb >= k,
                };
                if hit {
                    fired = true;
                    crash(&mut w, &p.selector);
                    since_crash = Some(0);
                }
            }
            if let (Some(n), Some(s)) = (&p.nested, since_crash) {
                if !nested_fired && s == n.after && w.recovering() {
                    nested_fired = true;
                    crash(&mut w, &n.selector);
                }
            }
        }
        if w.done() || w.steps >= STEP_LIMIT {
            break;
        }
        let t = if let Some(d) = schedule.prefix.get(pos) {
            pos += 1;
            match d {
                Directive::Thread(t) => *t,
                Directive::Crash(sel) => {
                    crash(&mut w, sel);
                    continue;
                }
            }
        } else {
            let en = w.enabled_threads();
            if en.is_empty() {
                w.violations.push(format!("deadlock at step {}", w.steps));
                break;
            }
            en[rng.gen_range(0..en.len())]
        };
        let stepped = match guarded(|| w.step(t)) {
            Ok(s) => s,
            Err(msg) => {
                w.violations
                    .push(format!("panic at step {} on thread {t}: {msg}", w.steps));
                break;
            }
        };
        if stepped != Stepped::Skipped {
            trace.push(t);
            if let Some(s) = since_crash.as_mut() {
                *s += 1;
            }
        }
    }
    if !w.done() {
        w.violations
            .push(format!("did not terminate within {STEP_LIMIT} steps"));
    }
    if let Some(Nested { .. }) = plan.and_then(|p| p.nested.as_ref()) {
        if !nested_fired {
            w.notes.push("nested crash not reached: recovery finished first".into());
        }
    }
    Run {
        view: w.view(),
        history: w.history,
        trace,
        violations: w.violations,
        notes: w.notes,
        pmem_log: w.pmem_log,
        steps: w.steps,
        max_op_steps: w.max_op_steps,
        mem: w.mem,
    }
}
