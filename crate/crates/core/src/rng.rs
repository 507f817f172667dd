//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! 64-bit seed and a stream id, so replaying a seed reproduces every sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type AmberRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> AmberRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> AmberRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 64-bit FNV-1a, used for mesh identity tags and config digests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
