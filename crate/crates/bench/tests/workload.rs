use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use pcomb::pmem::LayoutBuilder;
use pcomb::structures::AtomicFloat;
use pcomb::{execute, LiveBackend, LiveMemory, PbComb, PbConfig, PwfComb, PwfConfig, Recoverable};
use pcomb_bench::{local_work, run_bench, Algo, Backend, BenchConfig, Object};

#[test]
fn local_work_is_uniform() {
    const MAX: u64 = 63;
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bins = [0f64; MAX as usize + 1];
    for _ in 0..DRAWS {
        bins[local_work(&mut rng, MAX) as usize] += 1.0;
    }
    let expected = DRAWS as f64 / bins.len() as f64;
    let stat: f64 = bins.iter().map(|o| (o - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((bins.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn doubling_a_hundred_times() {
    let want = 2f64.powi(100);
    for algo in [Algo::Bcomb, Algo::Pbcomb, Algo::Pwfcomb, Algo::LockBaseline] {
        for backend in [Backend::CountedNoop, Backend::Model] {
            let cfg = BenchConfig {
                algo,
                object: Object::AtomicFloat,
                threads: 1,
                total_ops: 100,
                runs: 1,
                backend,
                factor: 2.0,
                max_local_work: 0,
                ..Default::default()
            };
            let r = run_bench(&cfg).unwrap();
            assert_eq!(r.runs[0].final_state, vec![want.to_bits()], "{algo:?} {backend:?}");
        }
    }
}

#[test]
fn responses_double_strictly() {
    let mut b = LayoutBuilder::new();
    let pb = PbComb::new(&mut b, 1, AtomicFloat::new(1.0), PbConfig::default()).unwrap();
    let pwf = PwfComb::new(&mut b, 1, AtomicFloat::new(1.0), PwfConfig::default()).unwrap();
    let mem = LiveMemory::new(&b.build(), 1, LiveBackend::CountedNoop);
    pb.init(&mem);
    pwf.init(&mem);
    let a: Vec<f64> = (1..=100)
        .map(|s| f64::from_bits(execute(&pb, 0, AtomicFloat::mul(2.0, s), &mem)))
        .collect();
    let b: Vec<f64> = (1..=100)
        .map(|s| f64::from_bits(execute(&pwf, 0, AtomicFloat::mul(2.0, s), &mem)))
        .collect();
    for r in [a, b] {
        assert!(r.windows(2).all(|w| w[1] == 2.0 * w[0] && w[1] > w[0]));
        assert_eq!(r[0], 1.0);
        assert_eq!(r[99], 2f64.powi(99));
    }
}
