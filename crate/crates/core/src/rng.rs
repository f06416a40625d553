//! Deterministic random-number streams for Monte Carlo replicates.
//!
//! Seeding contract: a master seed plus a replicate index derives an
//! independent stream deterministically, so replicates can fan out across
//! threads with no shared mutable state and reruns reproduce every path
//! bit for bit. Distinct estimator call sites mix in a `domain` tag so they
//! never share streams even under one master seed.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

/// SplitMix64 finalizer, used to spread seed/domain bits.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one replicate of one estimator.
pub fn replicate_rng(master_seed: u64, domain: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(domain)));
    rng.set_stream(replicate);
    rng
}

/// Exponential variate with the given rate, by inversion of `1 − U ∈ (0, 1]`.
pub fn exp_rate<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}
