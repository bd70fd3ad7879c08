//! Seeded substreams and noise sampling.
//!
//! Every stochastic component draws from a `ChaCha8Rng` substream derived
//! from `(seed, index, index)` tuples, so results are reproducible under
//! parallel execution regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bounds::NoiseScale;

/// SplitMix64 finalizer; decorrelates structured seed inputs.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent substream for `(seed, a, b)`.
pub fn substream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let s = mix64(mix64(mix64(seed).wrapping_add(a)).wrapping_add(b));
    ChaCha8Rng::seed_from_u64(s)
}

/// One scalar draw from the configured noise family.
pub fn sample_noise_scalar<R: Rng>(rng: &mut R, noise: NoiseScale) -> f64 {
    match noise {
        NoiseScale::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).expect("validated scale");
            normal.sample(rng)
        }
        NoiseScale::Laplacian { lambda } => {
            // magnitude from Exp(1/lambda), sign from a fair coin
            let u: f64 = rng.gen();
            let magnitude = -lambda * (1.0 - u).ln();
            if rng.gen::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        }
    }
}

/// `x` plus i.i.d. per-coordinate noise.
pub fn add_noise<R: Rng>(x: &[f64], noise: NoiseScale, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&v| v + sample_noise_scalar(rng, noise))
        .collect()
}
