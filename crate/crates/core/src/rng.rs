//! Seeded randomness: every sampler takes an explicit seed, and pipeline
//! stages derive disjoint streams from a single root seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic per-stage stream from a root seed and a stage label.
pub fn stage_rng(root_seed: u64, stage: &str) -> ChaCha8Rng {
    // FNV-1a over the label, mixed into the root seed.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(root_seed ^ h)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
