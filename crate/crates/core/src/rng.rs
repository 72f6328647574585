//! Seeded random streams.
//!
//! Every bootstrap replicate draws from its own ChaCha stream derived from
//! `(seed, replicate, attempt)`, so results never depend on how replicates
//! are scheduled across workers.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Maximum number of redraws a single replicate may use.
pub const MAX_ATTEMPTS: u64 = 1 << 16;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream for one attempt of one replicate.
pub fn substream(seed: u64, replicate: u64, attempt: u64) -> ChaCha8Rng {
    debug_assert!(attempt < MAX_ATTEMPTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_mul(MAX_ATTEMPTS).wrapping_add(attempt));
    rng
}

/// Derives a child seed for a named stage from a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform index in `0..n` without modulo bias.
pub fn uniform_index<R: rand_core::RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn uniform01<R: rand_core::RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fisher-Yates shuffle.
pub fn shuffle<T, R: rand_core::RngCore>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Executes independent, index-addressed replicates.
///
/// The core crate only ships [`Sequential`]; callers with threads available
/// can plug in a parallel implementation. Implementations must return the
/// results in index order.
pub trait ReplicateRunner: Sync {
    fn run<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl ReplicateRunner for Sequential {
    fn run<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}
