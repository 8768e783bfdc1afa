//! Per-sample random streams derived from a master seed.
//!
//! Every sample owns an independent ChaCha stream, so results do not depend on
//! the order in which samples are evaluated.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type SampleRng = ChaCha8Rng;

/// Stream for the `index`-th sample of the given `domain`.
///
/// Domain 0 is reserved for pilot samples (shared by every level); MLMC draws
/// use one domain per level so levels stay independent.
pub fn sample_stream(master_seed: u64, domain: u32, index: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((domain as u64) << 40) ^ index);
    rng
}

/// Uniform draw from `[0, 1)` with 53 random bits.
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
