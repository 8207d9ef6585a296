//! Portable seeded randomness.
//!
//! Every random draw in the crate comes from `ChaCha8Rng`, whose output is
//! fixed by its algorithm and therefore identical across platforms. A seed is
//! split into independent streams with ChaCha's 64-bit stream selector rather
//! than by perturbing the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream reserved for warm-start perturbations so they never overlap the
/// instance-generation streams (which count up from zero).
pub const PERTURB_STREAM: u64 = 1 << 40;
