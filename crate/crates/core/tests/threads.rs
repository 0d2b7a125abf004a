//! Real threads over live memory.

use std::collections::BTreeMap;
use std::thread;

use pcomb::pmem::LayoutBuilder;
use pcomb::structures::{Counter, PbQueue, PwfQueue, Stack, COUNTER_INC, QUEUE_DEQ, QUEUE_ENQ, STACK_POP, STACK_PUSH};
use pcomb::{execute, Call, LiveBackend, LiveMemory, PbComb, PbConfig, PwfComb, PwfConfig, Recoverable, BOT};

const THREADS: usize = 4;
const PER_THREAD: u64 = 1500;

fn run_all<R: Recoverable + Sync>(obj: &R, mem: &LiveMemory, ops: impl Fn(usize, u64) -> Call + Sync) -> Vec<Vec<u64>> {
    thread::scope(|s| {
        let hs: Vec<_> = (0..THREADS)
            .map(|t| {
                let ops = &ops;
                s.spawn(move || {
                    (0..PER_THREAD)
                        .map(|i| execute(obj, t, ops(t, i), mem))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn counter_responses<R: Recoverable + Sync>(obj: &R, mem: &LiveMemory) {
    obj.init(mem);
    let out = run_all(obj, mem, |_, i| Call::new(COUNTER_INC, 0, i + 1));
    for r in &out {
        assert!(r.windows(2).all(|w| w[0] < w[1]), "a thread's increments are ordered");
    }
    let mut all: Vec<u64> = out.concat();
    all.sort_unstable();
    let total = THREADS as u64 * PER_THREAD;
    assert_eq!(all, (0..total).collect::<Vec<_>>());
    assert_eq!(obj.dump(mem), vec![total]);
}

#[test]
fn blocking_counter_hands_out_every_value_once() {
    let mut b = LayoutBuilder::new();
    let pb = PbComb::new(&mut b, THREADS, Counter, PbConfig::default()).unwrap();
    let mem = LiveMemory::new(&b.build(), THREADS, LiveBackend::CountedNoop);
    counter_responses(&pb, &mem);
    let st = pb.combining();
    assert_eq!(st[0].served(), THREADS as u64 * PER_THREAD);
}

#[test]
fn wait_free_counter_hands_out_every_value_once() {
    let mut b = LayoutBuilder::new();
    let pwf = PwfComb::new(&mut b, THREADS, Counter, PwfConfig::default()).unwrap();
    let mem = LiveMemory::new(&b.build(), THREADS, LiveBackend::CountedNoop);
    counter_responses(&pwf, &mem);
}

/// Thread `t` alternates inserting a unique value and removing one.
fn conserves<R: Recoverable + Sync>(obj: &R, mem: &LiveMemory, ins: u64, rem: u64, residue: impl Fn() -> Vec<u64>) {
    obj.init(mem);
    let out = run_all(obj, mem, |t, i| {
        if i % 2 == 0 {
            Call::new(ins, 1 + t as u64 * PER_THREAD + i, i + 1)
        } else {
            Call::new(rem, 0, i + 1)
        }
    });
    let mut seen = BTreeMap::new();
    for r in out.iter() {
        for (i, &v) in r.iter().enumerate() {
            if i % 2 == 1 && v != BOT {
                *seen.entry(v).or_insert(0) += 1;
            }
        }
    }
    for v in residue() {
        *seen.entry(v).or_insert(0) += 1;
    }
    let inserted: BTreeMap<u64, i32> = (0..THREADS as u64)
        .flat_map(|t| (0..PER_THREAD).step_by(2).map(move |i| (1 + t * PER_THREAD + i, 1)))
        .collect();
    assert_eq!(seen, inserted);
}

#[test]
fn blocking_queue_conserves_elements() {
    let mut b = LayoutBuilder::new();
    let cap = THREADS * PER_THREAD as usize;
    let q = PbQueue::new(&mut b, THREADS, cap, PbConfig::default(), true).unwrap();
    let mem = LiveMemory::new(&b.build(), THREADS, LiveBackend::CountedNoop);
    conserves(&q, &mem, QUEUE_ENQ, QUEUE_DEQ, || q.contents(&mem));
}

#[test]
fn wait_free_queue_conserves_elements() {
    let mut b = LayoutBuilder::new();
    let cap = 3 * THREADS * PER_THREAD as usize;
    let q = PwfQueue::new(&mut b, THREADS, cap, PwfConfig::default(), true).unwrap();
    let mem = LiveMemory::new(&b.build(), THREADS, LiveBackend::CountedNoop);
    conserves(&q, &mem, QUEUE_ENQ, QUEUE_DEQ, || {
        let mut left = Vec::new();
        loop {
            match execute(&q, 0, Call::new(QUEUE_DEQ, 0, PER_THREAD + 1 + left.len() as u64), &mem) {
                BOT => return left,
                v => left.push(v),
            }
        }
    });
}

#[test]
fn stacks_conserve_elements() {
    let cap = THREADS * PER_THREAD as usize;
    let drain = |obj: &dyn Fn(u64) -> u64| {
        let mut left = Vec::new();
        loop {
            match obj(PER_THREAD + 1 + left.len() as u64) {
                BOT => return left,
                v => left.push(v),
            }
        }
    };

    let mut b = LayoutBuilder::new();
    let st = Stack::new(&mut b, "s", cap);
    let s = PbComb::new(&mut b, THREADS, st, PbConfig::default()).unwrap();
    let mem = LiveMemory::new(&b.build(), THREADS, LiveBackend::CountedNoop);
    conserves(&s, &mem, STACK_PUSH, STACK_POP, || {
        drain(&|seq| execute(&s, 0, Call::new(STACK_POP, 0, seq), &mem))
    });

    let mut b = LayoutBuilder::new();
    let st = Stack::new(&mut b, "s", 3 * cap);
    let s = PwfComb::new(&mut b, THREADS, st, PwfConfig::default()).unwrap();
    let mem = LiveMemory::new(&b.build(), THREADS, LiveBackend::CountedNoop);
    conserves(&s, &mem, STACK_PUSH, STACK_POP, || {
        drain(&|seq| execute(&s, 0, Call::new(STACK_POP, 0, seq), &mem))
    });
}
