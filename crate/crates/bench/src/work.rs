use std::hint::black_box;

use rand::Rng;

/// Spins for a uniform number of iterations in `[0, max]` and returns it.
pub fn local_work<R: Rng>(rng: &mut R, max: u64) -> u64 {
    if max == 0 {
        return 0;
    }
    let u = rng.gen_range(0..=max);
    let mut acc = 0u64;
    for i in 0..u {
        acc = black_box(acc.wrapping_add(i));
    }
    black_box(acc);
    u
}
