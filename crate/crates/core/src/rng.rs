//! Seeded randomness shared by every stochastic component.
//!
//! All generators are ChaCha8 streams created with `seed_from_u64`, so a
//! given seed yields the same draws on every platform. Components that need
//! independent streams from one master seed go through [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type ExalRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ExalRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a master seed with a stream tag (SplitMix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw from U[lo, hi) as `lo + (hi - lo) * u` with `u` in [0, 1).
#[inline]
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}
