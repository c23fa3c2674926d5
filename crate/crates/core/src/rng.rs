//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`SimRng`], a xoshiro256++
//! generator seeded through SplitMix64 (`seed_from_u64`). Independent streams
//! for replicas are carved out of one master seed with the generator's
//! `jump()` function, which advances the state by 2^128 draws, so stream `k`
//! never overlaps stream `k + 1` and results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// Generator for a master seed.
pub fn from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream `index` of the master seed.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = from_seed(seed);
    for _ in 0..index {
        rng.jump();
    }
    rng
}

/// The first `count` streams of the master seed, in order.
pub fn streams(seed: u64, count: usize) -> Vec<SimRng> {
    let mut rng = from_seed(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(rng.clone());
        rng.jump();
    }
    out
}
