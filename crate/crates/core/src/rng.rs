//! Seed plumbing. All randomness flows from 64-bit seeds through ChaCha8.
//!
//! A dataset of `m` samples drawn under seed `s` uses one generator per
//! sample, seeded with `s ^ i`, so any sample can be regenerated on its own
//! and sampling can be split across threads without changing the result.
//! Replicate and grid-point seeds come from [`derive`], which mixes through a
//! ChaCha stream so that neighbouring seeds do not share sample streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sample `index` of a dataset drawn under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// Child seed for stream `stream` of `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.next_u64()
}

/// Inverse-CDF draw from nonnegative weights summing to (about) one.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, masses: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in masses.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if x < acc {
            return i;
        }
    }
    last
}
