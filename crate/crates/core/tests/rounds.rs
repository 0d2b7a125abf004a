//! Persistence instructions per combining round under interleaved threads.

use pcomb::pmem::LayoutBuilder;
use pcomb::structures::{AtomicFloat, Counter, COUNTER_INC};
use pcomb::{Call, ModelMemory, PbComb, PbConfig, Recoverable, SeqObject, Step};

/// Round-robin over enabled threads until each has completed `per` calls.
fn interleave<R: Recoverable>(
    obj: &R,
    mem: &ModelMemory,
    per: usize,
    call: impl Fn(usize, u64) -> Call,
) -> Vec<Vec<u64>> {
    let n = obj.threads();
    let mut done = vec![Vec::new(); n];
    let mut ms: Vec<_> = (0..n).map(|t| Some(obj.invoke(t, call(t, 1)))).collect();
    while ms.iter().any(Option::is_some) {
        for t in 0..n {
            let Some(m) = ms[t].as_mut() else { continue };
            if !obj.enabled(t, m, mem) {
                continue;
            }
            if let Step::Done(v) = obj.step(t, m, mem) {
                done[t].push(v);
                let k = done[t].len() as u64;
                ms[t] = (done[t].len() < per).then(|| obj.invoke(t, call(t, k + 1)));
            }
        }
    }
    done
}

/// Write-backs one round issues: every request line, the record, the index.
fn expected_pwb(n: usize, state_words: usize) -> u64 {
    let record_bytes = 8 * (1 + n + state_words);
    (n + record_bytes.div_ceil(64) + 1) as u64
}

fn check<O: SeqObject>(n: usize, object: O, call: impl Fn(usize, u64) -> Call) {
    let words = object.state_words();
    let mut b = LayoutBuilder::new();
    let pb = PbComb::new(&mut b, n, object, PbConfig::default()).unwrap();
    let mem = ModelMemory::from_layout(b.build(), n).without_trace();
    pb.init(&mem);
    mem.reset_stats();
    interleave(&pb, &mem, 20, call);
    let st = pb.combining();
    let rounds = st[0].rounds();
    assert_eq!(st[0].served(), 20 * n as u64);
    assert!(rounds < 20 * n as u64, "no round served more than one request");
    let c = mem.stats().total();
    assert_eq!(c.pwb, rounds * expected_pwb(n, words));
    assert_eq!((c.pfence, c.psync), (rounds, rounds));
}

#[test]
fn counter_rounds() {
    for n in [2, 3, 8] {
        check(n, Counter, |_, s| Call::new(COUNTER_INC, 0, s));
    }
}

#[test]
fn float_rounds() {
    for n in [4, 7, 16] {
        check(n, AtomicFloat::new(1.0), |_, s| AtomicFloat::mul(1.0, s));
    }
}

#[test]
fn persistence_off_issues_nothing() {
    let mut b = LayoutBuilder::new();
    let cfg = PbConfig {
        persistence: false,
        ..Default::default()
    };
    let pb = PbComb::new(&mut b, 3, Counter, cfg).unwrap();
    let mem = ModelMemory::from_layout(b.build(), 3);
    pb.init(&mem);
    mem.reset_stats();
    let out = interleave(&pb, &mem, 10, |_, s| Call::new(COUNTER_INC, 0, s));
    let mut all = out.concat();
    all.sort_unstable();
    assert_eq!(all, (0..30).collect::<Vec<_>>());
    let c = mem.stats().total();
    assert_eq!((c.pwb, c.pfence, c.psync), (0, 0, 0));
}
