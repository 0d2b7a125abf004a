use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcomb::pmem::{Counts, Layout, LayoutBuilder};
use pcomb::structures::{
    AtomicFloat, Heap, PbQueue, PwfQueue, Stack, FLOAT_MUL, HEAP_DELETE_MIN, HEAP_INSERT, QUEUE_DEQ, QUEUE_ENQ,
    STACK_POP, STACK_PUSH,
};
use pcomb::{
    combining_degree, execute, Call, LiveBackend, LiveMemory, ModelMemory, PbComb, PbConfig, PwfComb, PwfConfig,
    Recoverable, Step,
};

use crate::baseline::{LockBaseline, SeqQueue};
use crate::config::{Algo, Backend, BenchConfig, BenchError, Object};
use crate::report::{BenchReport, Row, RunResult};
use crate::work::local_work;

const FLOAT_INIT: f64 = 1.0;

/// Runs every configured repetition.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let runs = (0..cfg.runs).map(|r| run_once(cfg, r)).collect::<Result<Vec<_>, _>>()?;
    Ok(BenchReport {
        config: cfg.clone(),
        runs,
    })
}

fn run_seed(cfg: &BenchConfig, run: usize) -> u64 {
    cfg.seed ^ (run as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn thread_seed(seed: u64, tid: usize) -> u64 {
    seed.wrapping_add((tid as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

/// The `i`-th operation of thread `tid`. Containers alternate insertions and
/// removals.
fn next_op<R: Rng>(cfg: &BenchConfig, rng: &mut R, tid: usize, i: u64) -> (u64, u64) {
    let insert = i.is_multiple_of(2);
    match cfg.object {
        Object::AtomicFloat => (FLOAT_MUL, cfg.factor.to_bits()),
        Object::Queue if insert => (QUEUE_ENQ, ((tid as u64 + 1) << 32) | i),
        Object::Queue => (QUEUE_DEQ, 0),
        Object::Stack if insert => (STACK_PUSH, ((tid as u64 + 1) << 32) | i),
        Object::Stack => (STACK_POP, 0),
        Object::Heap if insert => (HEAP_INSERT, rng.gen_range(1..1 << 30)),
        Object::Heap => (HEAP_DELETE_MIN, 0),
    }
}

/// Nodes a run may allocate. Wait-free attempts that lose leak their nodes:
/// each operation makes at most two attempts, each allocating at most one node
/// per thread. The model scheduler gets that bound; real threads lose far less
/// often and get a multiple of the insertions.
fn node_capacity(cfg: &BenchConfig) -> usize {
    let n = cfg.threads;
    let ops = cfg.ops_per_thread() as usize * n;
    let inserts = (cfg.ops_per_thread().div_ceil(2) as usize) * n;
    match (cfg.algo, cfg.backend) {
        (Algo::Pwfcomb, Backend::Model) => 2 * n * ops + 64,
        (Algo::Pwfcomb, _) => 3 * inserts + 64 * n,
        _ => inserts + 1,
    }
}

fn run_once(cfg: &BenchConfig, run: usize) -> Result<RunResult, BenchError> {
    let n = cfg.threads;
    let mut b = LayoutBuilder::new();
    let pb = PbConfig {
        persistence: cfg.algo != Algo::Bcomb,
        ..Default::default()
    };
    let pwf = PwfConfig::default();
    let cap = node_capacity(cfg);
    match (cfg.algo, cfg.object) {
        (Algo::Bcomb | Algo::Pbcomb, Object::AtomicFloat) => {
            let o = PbComb::new(&mut b, n, AtomicFloat::new(FLOAT_INIT), pb)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Bcomb | Algo::Pbcomb, Object::Queue) => {
            let o = PbQueue::new(&mut b, n, cap, pb, true)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Bcomb | Algo::Pbcomb, Object::Stack) => {
            let s = Stack::new(&mut b, "stack", cap);
            let o = PbComb::new(&mut b, n, s, pb)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Bcomb | Algo::Pbcomb, Object::Heap) => {
            let o = PbComb::new(&mut b, n, Heap::new(cfg.heap_capacity)?, pb)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Pwfcomb, Object::AtomicFloat) => {
            let o = PwfComb::new(&mut b, n, AtomicFloat::new(FLOAT_INIT), pwf)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Pwfcomb, Object::Queue) => {
            let o = PwfQueue::new(&mut b, n, cap, pwf, true)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Pwfcomb, Object::Stack) => {
            let s = Stack::new(&mut b, "stack", cap);
            let o = PwfComb::new(&mut b, n, s, pwf)?;
            measure(&o, b.build(), cfg, run)
        }
        (Algo::Pwfcomb, Object::Heap) => Err(BenchError::Unsupported {
            algo: cfg.algo,
            object: cfg.object,
        }),
        (Algo::LockBaseline, Object::AtomicFloat) => {
            let o = LockBaseline::new(&mut b, n, AtomicFloat::new(FLOAT_INIT));
            measure(&o, b.build(), cfg, run)
        }
        (Algo::LockBaseline, Object::Queue) => {
            let q = SeqQueue::new(&mut b, cap);
            let o = LockBaseline::new(&mut b, n, q);
            measure(&o, b.build(), cfg, run)
        }
        (Algo::LockBaseline, Object::Stack) => {
            let s = Stack::new(&mut b, "stack", cap);
            let o = LockBaseline::new(&mut b, n, s);
            measure(&o, b.build(), cfg, run)
        }
        (Algo::LockBaseline, Object::Heap) => {
            let o = LockBaseline::new(&mut b, n, Heap::new(cfg.heap_capacity)?);
            measure(&o, b.build(), cfg, run)
        }
    }
}

struct Raw {
    secs: f64,
    counts: Counts,
    final_state: Vec<u64>,
}

fn measure<R: Recoverable + Sync>(
    obj: &R,
    layout: Layout,
    cfg: &BenchConfig,
    run: usize,
) -> Result<RunResult, BenchError> {
    let seed = run_seed(cfg, run);
    let raw = match cfg.backend {
        Backend::Model => run_model(obj, layout, cfg, seed),
        Backend::CountedNoop => run_live(obj, layout, cfg, seed, LiveBackend::CountedNoop)?,
        Backend::Hardware => run_live(obj, layout, cfg, seed, LiveBackend::Hardware)?,
    };
    let stats = obj.combining();
    let ops = cfg.ops_per_thread() * cfg.threads as u64;
    let per_op = |c: u64| if ops == 0 { 0.0 } else { c as f64 / ops as f64 };
    Ok(RunResult {
        row: Row {
            algo: cfg.algo,
            object: cfg.object,
            threads: cfg.threads,
            run,
            throughput: if raw.secs > 0.0 { ops as f64 / raw.secs } else { 0.0 },
            pwb_per_op: per_op(raw.counts.pwb),
            pfence_per_op: per_op(raw.counts.pfence),
            psync_per_op: per_op(raw.counts.psync),
            combining_degree: combining_degree(&stats),
        },
        ops,
        counts: raw.counts,
        rounds: stats.iter().map(|s| s.rounds()).sum(),
        served: stats.iter().map(|s| s.served()).sum(),
        final_state: raw.final_state,
    })
}

fn reset<R: Recoverable>(obj: &R) {
    for s in obj.combining() {
        s.reset();
    }
}

fn run_live<R: Recoverable + Sync>(
    obj: &R,
    layout: Layout,
    cfg: &BenchConfig,
    seed: u64,
    backend: LiveBackend,
) -> Result<Raw, BenchError> {
    let n = cfg.threads;
    let mem = LiveMemory::new(&layout, n, backend);
    obj.init(&mem);
    mem.reset_stats();
    reset(obj);
    let per_thread = cfg.ops_per_thread();
    let cores = core_affinity::get_core_ids().unwrap_or_default();
    let start = Instant::now();
    let panicked = std::thread::scope(|s| {
        let workers: Vec<_> = (0..n)
            .map(|tid| {
                let (mem, cores) = (&mem, &cores);
                s.spawn(move || {
                    if !cores.is_empty() {
                        core_affinity::set_for_current(cores[tid % cores.len()]);
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(thread_seed(seed, tid));
                    for i in 0..per_thread {
                        let (func, arg) = next_op(cfg, &mut rng, tid, i);
                        execute(obj, tid, Call::new(func, arg, i + 1), mem);
                        local_work(&mut rng, cfg.max_local_work);
                    }
                })
            })
            .collect();
        workers.into_iter().filter_map(|w| w.join().err()).next()
    });
    if let Some(e) = panicked {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        return Err(BenchError::Worker(msg));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Raw {
        secs,
        counts: mem.stats().total(),
        final_state: obj.dump(&mem),
    })
}

struct Worker<Mc> {
    rng: ChaCha8Rng,
    next: u64,
    machine: Option<Mc>,
    idle: u64,
}

/// Interleaves all threads one step at a time under a seeded scheduler. Local
/// work becomes that many no-op steps.
/// Simulated duration of one model step; threads advance in parallel.
pub const MODEL_STEP_SECS: f64 = 1e-9;

fn run_model<R: Recoverable>(obj: &R, layout: Layout, cfg: &BenchConfig, seed: u64) -> Raw {
    let n = cfg.threads;
    let mem = ModelMemory::from_layout(layout, n).without_trace();
    obj.init(&mem);
    mem.reset_stats();
    reset(obj);
    let per_thread = cfg.ops_per_thread();
    let mut sched = ChaCha8Rng::seed_from_u64(seed);
    let mut workers: Vec<Worker<R::Machine>> = (0..n)
        .map(|tid| Worker {
            rng: ChaCha8Rng::seed_from_u64(thread_seed(seed, tid)),
            next: 0,
            machine: None,
            idle: 0,
        })
        .collect();
    let mut steps = 0u64;
    let mut ready = Vec::with_capacity(n);
    loop {
        ready.clear();
        for (tid, w) in workers.iter().enumerate() {
            let runnable = match &w.machine {
                Some(m) => obj.enabled(tid, m, &mem),
                None => w.idle > 0 || w.next < per_thread,
            };
            if runnable {
                ready.push(tid);
            }
        }
        if ready.is_empty() {
            assert!(
                workers.iter().all(|w| w.machine.is_none()),
                "every unfinished thread is blocked"
            );
            break;
        }
        let tid = ready[sched.gen_range(0..ready.len())];
        steps += 1;
        let w = &mut workers[tid];
        if w.idle > 0 {
            w.idle -= 1;
        } else if let Some(m) = w.machine.as_mut() {
            if let Step::Done(_) = obj.step(tid, m, &mem) {
                w.machine = None;
                w.idle = if cfg.max_local_work == 0 {
                    0
                } else {
                    w.rng.gen_range(0..=cfg.max_local_work)
                };
            }
        } else {
            let (func, arg) = next_op(cfg, &mut w.rng, tid, w.next);
            w.next += 1;
            w.machine = Some(obj.invoke(tid, Call::new(func, arg, w.next)));
        }
    }
    Raw {
        secs: steps as f64 * MODEL_STEP_SECS / n as f64,
        counts: mem.stats().total(),
        final_state: obj.dump(&mem),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(algo: Algo, object: Object, threads: usize, ops: u64) -> BenchConfig {
        BenchConfig {
            algo,
            object,
            threads,
            total_ops: ops,
            max_local_work: 4,
            runs: 1,
            backend: Backend::Model,
            ..Default::default()
        }
    }

    #[test]
    fn model_rows_are_reproducible() {
        let cfg = BenchConfig {
            runs: 2,
            ..model(Algo::Pwfcomb, Object::Queue, 3, 600)
        };
        let a = run_bench(&cfg).unwrap();
        let b = run_bench(&cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.runs[0].row.throughput, a.runs[1].row.throughput);
    }

    #[test]
    fn identity_factor_keeps_the_float() {
        for algo in [Algo::Bcomb, Algo::Pbcomb, Algo::Pwfcomb, Algo::LockBaseline] {
            let r = run_bench(&model(algo, Object::AtomicFloat, 3, 300)).unwrap();
            assert_eq!(r.runs[0].final_state, vec![1.0f64.to_bits()], "{algo:?}");
        }
    }

    #[test]
    fn every_pairing_runs_on_both_backends() {
        for algo in [Algo::Bcomb, Algo::Pbcomb, Algo::Pwfcomb, Algo::LockBaseline] {
            for object in [Object::AtomicFloat, Object::Queue, Object::Stack, Object::Heap] {
                let mut cfg = model(algo, object, 3, 120);
                cfg.heap_capacity = 8;
                if algo == Algo::Pwfcomb && object == Object::Heap {
                    assert!(run_bench(&cfg).is_err());
                    continue;
                }
                let r = run_bench(&cfg).unwrap();
                assert_eq!(r.runs[0].ops, 120);
                cfg.backend = Backend::CountedNoop;
                let r = run_bench(&cfg).unwrap();
                if object != Object::AtomicFloat {
                    assert!(r.runs[0].final_state.len() <= 3, "{algo:?} {object:?}");
                }
            }
        }
    }

    #[test]
    fn bcomb_issues_no_persistence_instructions() {
        let r = run_bench(&model(Algo::Bcomb, Object::Queue, 4, 400)).unwrap();
        assert_eq!(r.runs[0].counts, Counts::default());
    }
}
