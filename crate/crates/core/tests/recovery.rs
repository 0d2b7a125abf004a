//! A crash at every step of one operation, followed by recovery.

use pcomb::pmem::{CrashSelector, LayoutBuilder};
use pcomb::structures::{AtomicFloat, Counter, COUNTER_INC};
use pcomb::{drive, execute, Call, ModelMemory, PbComb, PbConfig, PwfComb, PwfConfig, Recoverable, Step};

/// Runs `pre` calls, then the probed call for `k` steps, crashes and recovers it.
/// Returns the recovered response and the final state.
fn crash_at<R: Recoverable>(
    build: &dyn Fn() -> (R, ModelMemory),
    pre: &[Call],
    call: Call,
    k: usize,
    sel: &CrashSelector,
) -> Option<(u64, Vec<u64>)> {
    let (obj, mem) = build();
    obj.init(&mem);
    for &c in pre {
        execute(&obj, 0, c, &mem);
    }
    let mut m = obj.invoke(0, call);
    for _ in 0..k {
        if let Step::Done(_) = obj.step(0, &mut m, &mem) {
            return None;
        }
    }
    mem.crash(sel).unwrap();
    let mut r = obj.recover(0, call);
    let v = drive(&obj, 0, &mut r, &mem);
    Some((v, obj.dump(&mem)))
}

fn every_step<R: Recoverable>(build: &dyn Fn() -> (R, ModelMemory), pre: &[Call], call: Call, want: (u64, Vec<u64>)) {
    for sel in [CrashSelector::All, CrashSelector::None, CrashSelector::Random(7)] {
        let mut k = 0;
        while let Some(got) = crash_at(build, pre, call, k, &sel) {
            assert_eq!(got, want, "crash after {k} steps ({sel:?})");
            k += 1;
        }
        assert!(k > 3, "operation took only {k} steps");
    }
}

fn pb<O: pcomb::SeqObject>(n: usize, o: impl Fn() -> O) -> impl Fn() -> (PbComb<O>, ModelMemory) {
    move || {
        let mut b = LayoutBuilder::new();
        let x = PbComb::new(&mut b, n, o(), PbConfig::default()).unwrap();
        (x, ModelMemory::from_layout(b.build(), n))
    }
}

fn pwf<O: pcomb::SeqObject>(n: usize, o: impl Fn() -> O) -> impl Fn() -> (PwfComb<O>, ModelMemory) {
    move || {
        let mut b = LayoutBuilder::new();
        let x = PwfComb::new(&mut b, n, o(), PwfConfig::default()).unwrap();
        (x, ModelMemory::from_layout(b.build(), n))
    }
}

#[test]
fn blocking_counter_applies_once() {
    let pre = [Call::new(COUNTER_INC, 0, 1), Call::new(COUNTER_INC, 0, 2)];
    every_step(&pb(2, || Counter), &pre, Call::new(COUNTER_INC, 0, 3), (2, vec![3]));
}

#[test]
fn wait_free_counter_applies_once() {
    let pre = [Call::new(COUNTER_INC, 0, 1), Call::new(COUNTER_INC, 0, 2)];
    every_step(&pwf(2, || Counter), &pre, Call::new(COUNTER_INC, 0, 3), (2, vec![3]));
}

#[test]
fn float_multiplication_is_not_repeated() {
    let pre = [AtomicFloat::mul(2.0, 1)];
    let want = (4.0f64.to_bits(), vec![12.0f64.to_bits()]);
    every_step(
        &pb(3, || AtomicFloat::new(2.0)),
        &pre,
        AtomicFloat::mul(3.0, 2),
        want.clone(),
    );
    every_step(&pwf(3, || AtomicFloat::new(2.0)), &pre, AtomicFloat::mul(3.0, 2), want);
}

#[test]
fn first_operation_recovers_from_the_initial_image() {
    every_step(&pb(1, || Counter), &[], Call::new(COUNTER_INC, 0, 1), (0, vec![1]));
    every_step(&pwf(1, || Counter), &[], Call::new(COUNTER_INC, 0, 1), (0, vec![1]));
}
