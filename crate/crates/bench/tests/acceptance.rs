//! Acceptance criteria, one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::Instant;

use pcomb::structures::{QUEUE_DEQ, QUEUE_ENQ};
use pcomb::{PbConfig, PbMutation, PwfConfig, PwfMutation, Recoverable};
use pcomb_bench::{run_bench, Algo, Backend, BenchConfig, Object, RunResult};
use pcomb_harness::persist::{check_soundness, regression_set};
use pcomb_harness::workload::*;
use pcomb_harness::*;

const SEED: u64 = 2024;
const RANDOM_RUNS: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn off() -> PbConfig {
    PbConfig {
        persistence: false,
        ..Default::default()
    }
}

fn heap_oracle() -> HeapOracle {
    HeapOracle {
        capacity: HEAP_CAPACITY,
    }
}

fn float_oracle() -> FloatOracle {
    FloatOracle { init: FLOAT_INIT }
}

/// Exhaustive 2x2 and random 3x4; returns failures and a short note.
fn linearizable<R: Recoverable, O: Oracle>(
    name: &str,
    small: Target<R>,
    big: Target<R>,
    oracle: &O,
) -> (usize, String) {
    let e = explore(&small, oracle, 20_000_000);
    let r = random_suite(&big, oracle, RANDOM_RUNS, SEED);
    let bad = e.failures.len() + r.failed + usize::from(e.truncated);
    if bad > 0 {
        eprintln!(
            "{name}: {} exhaustive failures, {} random failures",
            e.failures.len(),
            r.failed
        );
        if let Some(v) = e.failures.first().or(r.failures.first()) {
            eprintln!("{v}");
        }
    }
    (bad, format!("{name} {}h", e.histories))
}

fn criterion_1() -> Outcome {
    let mut bad = 0;
    let mut notes = Vec::new();
    let mut add = |(b, n): (usize, String)| {
        bad += b;
        notes.push(n);
    };
    let o2 = |k| ops(k, 2, 2);
    let o3 = |k| ops(k, 3, 4);
    let (q2, q3) = (o2(Kind::Queue), o3(Kind::Queue));
    let (s2, s3) = (o2(Kind::Stack), o3(Kind::Stack));

    add(linearizable(
        "pb/counter",
        pb_target(2, counter, off(), o2(Kind::Counter)),
        pb_target(3, counter, off(), o3(Kind::Counter)),
        &CounterOracle,
    ));
    add(linearizable(
        "pb/float",
        pb_target(2, float, off(), o2(Kind::Float)),
        pb_target(3, float, off(), o3(Kind::Float)),
        &float_oracle(),
    ));
    add(linearizable(
        "pb/queue",
        pbqueue_target(2, off(), true, q2.clone()),
        pbqueue_target(3, off(), true, q3.clone()),
        &QueueOracle,
    ));
    add(linearizable(
        "pb/stack",
        pb_target(2, stack(&s2), off(), s2.clone()),
        pb_target(3, stack(&s3), off(), s3.clone()),
        &StackOracle,
    ));
    add(linearizable(
        "pb/heap",
        pb_target(2, heap, off(), o2(Kind::Heap)),
        pb_target(3, heap, off(), o3(Kind::Heap)),
        &heap_oracle(),
    ));
    let wf = PwfConfig::default();
    add(linearizable(
        "pwf/counter",
        pwf_target(2, counter, wf, o2(Kind::Counter)),
        pwf_target(3, counter, wf, o3(Kind::Counter)),
        &CounterOracle,
    ));
    add(linearizable(
        "pwf/float",
        pwf_target(2, float, wf, o2(Kind::Float)),
        pwf_target(3, float, wf, o3(Kind::Float)),
        &float_oracle(),
    ));
    add(linearizable(
        "pwf/queue",
        pwfqueue_target(2, wf, true, q2),
        pwfqueue_target(3, wf, true, q3),
        &QueueOracle,
    ));
    add(linearizable(
        "pwf/stack",
        pwf_target(2, stack(&s2), wf, s2.clone()),
        pwf_target(3, stack(&s3), wf, s3.clone()),
        &StackOracle,
    ));
    add(linearizable(
        "pwf/heap",
        pwf_target(2, heap, wf, o2(Kind::Heap)),
        pwf_target(3, heap, wf, o3(Kind::Heap)),
        &heap_oracle(),
    ));
    outcome(
        bad == 0,
        format!(
            "{bad} failures; the blocking combiner with persistence off is the volatile one; {}",
            notes.join(", ")
        ),
    )
}

fn suite<R: Recoverable, O: Oracle>(t: &Target<R>, oracle: &O, bases: &[Schedule]) -> SuiteReport {
    crash_suite(t, oracle, bases, &EnumConfig::default()).expect("2x2 is within bounds")
}

fn criterion_2() -> Outcome {
    let bases = base_schedules(2, 16, SEED);
    let pb = PbConfig::default();
    let wf = PwfConfig::default();
    let q = ops(Kind::Queue, 2, 2);
    let s = ops(Kind::Stack, 2, 2);
    let c = ops(Kind::Counter, 2, 2);
    let reports = [
        (
            "pb/counter",
            suite(&pb_target(2, counter, pb, c.clone()), &CounterOracle, &bases),
        ),
        (
            "pwf/counter",
            suite(&pwf_target(2, counter, wf, c), &CounterOracle, &bases),
        ),
        (
            "pb/queue",
            suite(&pbqueue_target(2, pb, true, q.clone()), &QueueOracle, &bases),
        ),
        (
            "pwf/queue",
            suite(&pwfqueue_target(2, wf, true, q), &QueueOracle, &bases),
        ),
        (
            "pb/stack",
            suite(&pb_target(2, stack(&s), pb, s.clone()), &StackOracle, &bases),
        ),
        (
            "pb/heap",
            suite(&pb_target(2, heap, pb, ops(Kind::Heap, 2, 2)), &heap_oracle(), &bases),
        ),
    ];
    let runs: usize = reports.iter().map(|(_, r)| r.runs).sum();
    let failed: usize = reports.iter().map(|(_, r)| r.failed).sum();
    for (name, r) in &reports {
        if let Some(v) = r.failures.first() {
            eprintln!("{name}: {v}");
        }
    }
    outcome(failed == 0, format!("{runs} crash plans, {failed} failing"))
}

/// True when some target's crash suite fails under the mutant.
fn pb_killed(m: PbMutation, bases: &[Schedule]) -> bool {
    let cfg = PbConfig {
        mutation: Some(m),
        ..Default::default()
    };
    let c = ops(Kind::Counter, 2, 2);
    let q = ops(Kind::Queue, 2, 2);
    let s = ops(Kind::Stack, 2, 2);
    suite(&pb_target(2, counter, cfg, c), &CounterOracle, bases).failed > 0
        || suite(&pbqueue_target(2, cfg, true, q), &QueueOracle, bases).failed > 0
        || suite(&pb_target(2, stack(&s), cfg, s.clone()), &StackOracle, bases).failed > 0
        || suite(&pb_target(2, heap, cfg, ops(Kind::Heap, 2, 2)), &heap_oracle(), bases).failed > 0
}

fn pwf_killed(m: PwfMutation, bases: &[Schedule]) -> bool {
    let cfg = PwfConfig {
        mutation: Some(m),
        ..Default::default()
    };
    let c = ops(Kind::Counter, 2, 2);
    let q = ops(Kind::Queue, 2, 2);
    let s = ops(Kind::Stack, 2, 2);
    suite(&pwf_target(2, counter, cfg, c), &CounterOracle, bases).failed > 0
        || suite(&pwfqueue_target(2, cfg, true, q), &QueueOracle, bases).failed > 0
        || suite(&pwf_target(2, stack(&s), cfg, s.clone()), &StackOracle, bases).failed > 0
}

fn criterion_3() -> Outcome {
    let bases = base_schedules(2, 4, SEED);
    let pb = [
        PbMutation::SkipPwbRequest,
        PbMutation::SkipPwbState,
        PbMutation::SkipPfence,
        PbMutation::SkipPwbIndex,
        PbMutation::SkipPsync,
        PbMutation::SkipSeqCheck,
    ];
    let pwf = [
        PwfMutation::SkipPwbRequest,
        PwfMutation::SkipPwbRecord,
        PwfMutation::SkipPfence,
        PwfMutation::SkipPwbS,
        PwfMutation::SkipPsync,
        PwfMutation::SkipFlush,
    ];
    let mut survivors = Vec::new();
    for m in pb {
        if !pb_killed(m, &bases) {
            survivors.push(format!("pb {m:?}"));
        }
    }
    for m in pwf {
        if !pwf_killed(m, &bases) {
            survivors.push(format!("pwf {m:?}"));
        }
    }
    let killed = pb.len() + pwf.len() - survivors.len();

    let mut extra = Vec::new();
    extra.push(("pb SkipPwbNodes", pb_killed(PbMutation::SkipPwbNodes, &bases)));
    extra.push(("pwf SkipPwbNodes", pwf_killed(PwfMutation::SkipPwbNodes, &bases)));
    let mut batches: Vec<(u64, u64)> = (1..=4).map(|i| (QUEUE_ENQ, i)).collect();
    batches.extend([(QUEUE_DEQ, 0); 4]);
    let t = pwfqueue_target(1, PwfConfig::default(), false, vec![batches]);
    let link = crash_every_step(&t, &QueueOracle, &Schedule::threads(&[0; 2000], SEED));
    extra.push(("queue link pwb", link.failed > 0));
    let extra_killed = extra.iter().filter(|(_, k)| *k).count();
    outcome(
        survivors.is_empty() && extra_killed == extra.len(),
        format!(
            "{killed}/12 mutants killed{}; extra node and link write-back mutants {extra_killed}/{}",
            if survivors.is_empty() {
                String::new()
            } else {
                format!(" (survivors: {})", survivors.join(", "))
            },
            extra.len()
        ),
    )
}

fn model(algo: Algo, object: Object, threads: usize) -> RunResult {
    let cfg = BenchConfig {
        algo,
        object,
        threads,
        total_ops: 20_000,
        max_local_work: 0,
        runs: 1,
        backend: Backend::Model,
        seed: SEED,
        ..Default::default()
    };
    run_bench(&cfg).expect("valid configuration").runs.remove(0)
}

fn criterion_4() -> Outcome {
    let n = 8;
    let sat = model(Algo::Pbcomb, Object::AtomicFloat, n);
    let solo = model(Algo::Pbcomb, Object::AtomicFloat, 1);
    // Deactivate word, n return values and one state word, in 64-byte lines.
    let record_lines = (8 * (1 + n + 1)).div_ceil(64) as u64;
    let per_round = n as u64 + record_lines + 1;
    let exact = sat.counts.pwb == sat.rounds * per_round;
    let degree = sat.row.combining_degree.unwrap_or(0.0);
    let fewer = sat.row.pwb_per_op < solo.row.pwb_per_op;
    outcome(
        exact && fewer && degree > 1.0,
        format!(
            "{} pwb over {} rounds = {per_round}/round (want {per_round}); pwb/op {:.3} at 8 threads vs {:.3} at 1, degree {degree:.2}",
            sat.counts.pwb,
            sat.rounds,
            sat.row.pwb_per_op,
            solo.row.pwb_per_op
        ),
    )
}

fn criterion_5() -> Outcome {
    let off = scenario::queue_guard(false);
    let on = scenario::queue_guard(true);
    outcome(
        !off.verdict.pass && on.verdict.pass,
        format!(
            "guard off: {} (early dequeue returned {}), guard on: {}",
            if off.verdict.pass { "pass" } else { "fail" },
            off.early_deq,
            if on.verdict.pass { "pass" } else { "fail" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let r = check_soundness(&regression_set(), RANDOM_RUNS, SEED);
    for v in r.violations.iter().take(3) {
        eprintln!("{v}");
    }
    outcome(
        r.passed(),
        format!(
            "{} programs, {} states, {} random crashes, {} violations",
            r.programs,
            r.states,
            r.crashes,
            r.violations.len()
        ),
    )
}

fn bounded<R: Recoverable, O: Oracle>(name: &str, t: Target<R>, oracle: &O, notes: &mut Vec<String>) -> bool {
    let fresh = t.obj.step_bound(false).expect("wait-free objects declare a bound");
    let rec = t.obj.step_bound(true).expect("wait-free objects declare a bound");
    let r = random_suite(&t, oracle, RANDOM_RUNS, SEED);
    let c = crash_suite(&t, oracle, &base_schedules(2, 2, SEED), &EnumConfig::plain());
    let within = r.passed() && r.max_op_steps[0] <= fresh;
    let recovery = match &c {
        Ok(c) => c.passed() && c.max_op_steps[0] <= fresh && c.max_op_steps[1] <= rec,
        Err(_) => true,
    };
    notes.push(format!("{name} {}/{fresh}", r.max_op_steps[0]));
    within && recovery
}

fn criterion_7() -> Outcome {
    let wf = PwfConfig::default();
    let mut notes = Vec::new();
    let s3 = ops(Kind::Stack, 3, 4);
    let ok = [
        bounded(
            "counter",
            pwf_target(3, counter, wf, ops(Kind::Counter, 3, 4)),
            &CounterOracle,
            &mut notes,
        ),
        bounded(
            "float",
            pwf_target(3, float, wf, ops(Kind::Float, 3, 4)),
            &float_oracle(),
            &mut notes,
        ),
        bounded(
            "queue",
            pwfqueue_target(3, wf, true, ops(Kind::Queue, 3, 4)),
            &QueueOracle,
            &mut notes,
        ),
        bounded(
            "stack",
            pwf_target(3, stack(&s3), wf, s3.clone()),
            &StackOracle,
            &mut notes,
        ),
        bounded(
            "heap",
            pwf_target(3, heap, wf, ops(Kind::Heap, 3, 4)),
            &heap_oracle(),
            &mut notes,
        ),
        bounded(
            "counter 2x2 crashes",
            pwf_target(2, counter, wf, ops(Kind::Counter, 2, 2)),
            &CounterOracle,
            &mut notes,
        ),
    ];
    outcome(
        ok.iter().all(|&b| b),
        format!("largest steps per operation vs bound: {}", notes.join(", ")),
    )
}

fn criterion_8() -> Outcome {
    let threads = 8;
    let mut lines = Vec::new();
    let mut deterministic = true;
    let mut ordered = true;
    for object in [Object::AtomicFloat, Object::Queue, Object::Stack] {
        let base = model(Algo::LockBaseline, object, threads);
        for algo in [Algo::Pbcomb, Algo::Pwfcomb] {
            let a = model(algo, object, threads);
            let b = model(algo, object, threads);
            deterministic &= a == b;
            let degree = a.row.combining_degree.unwrap_or(0.0);
            if degree <= 1.0 {
                continue;
            }
            let cmp = [
                ("pwb", base.row.pwb_per_op, a.row.pwb_per_op),
                ("pfence", base.row.pfence_per_op, a.row.pfence_per_op),
                ("psync", base.row.psync_per_op, a.row.psync_per_op),
            ];
            let worse: Vec<String> = cmp
                .iter()
                .filter(|(_, lock, comb)| lock < comb)
                .map(|(what, lock, comb)| format!("{what}/op {comb:.2} > lock {lock:.2}"))
                .collect();
            if !worse.is_empty() {
                ordered = false;
                lines.push(format!(
                    "{algo:?}/{object:?} (degree {degree:.2}): {}",
                    worse.join(", ")
                ));
            }
        }
    }
    let detail = format!(
        "model runs {}; baseline ordering {}",
        if deterministic { "identical" } else { "differ" },
        if ordered {
            "holds".to_string()
        } else {
            format!("violated by {}", lines.join("; "))
        }
    );
    outcome(deterministic && ordered, detail)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("linearizability", criterion_1),
        ("detectable recovery", criterion_2),
        ("mutation suite", criterion_3),
        ("pwb amortization", criterion_4),
        ("queue guard scenario", criterion_5),
        ("persistency model soundness", criterion_6),
        ("wait-freedom bound", criterion_7),
        ("determinism and baseline ordering", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {name}: {} ({}) [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
