//! Seeded randomness.
//!
//! Every generator in this crate draws from [`SeededRng`], a ChaCha8 stream
//! keyed by a 64-bit seed. ChaCha output is specified bit-for-bit, so the same
//! seed produces the same draws on every platform. Gaussian variates use the
//! ziggurat sampler of `rand_distr::StandardNormal`, which is a deterministic
//! function of the uniform stream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from `N(0, sigma^2)`. `sigma == 0` returns exactly zero without
/// consuming randomness.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
