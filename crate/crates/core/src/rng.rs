//! Deterministic random stream derivation.
//!
//! Every random decision in the pipeline (weight init, epoch shuffles, the
//! per-sample Bernoulli condition draw) pulls from a stream derived purely
//! from the master seed plus a few integer tags. Reproducing any draw never
//! requires replaying the draws before it, which is what makes parallel
//! sample materialization and mid-epoch checkpoint resume bitwise exact.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::num::{real, Scalar};

/// Stream purposes. Tag values are part of the checkpoint contract.
pub mod tag {
    pub const GENERATOR_INIT: u64 = 1;
    pub const DISCRIMINATOR_INIT: u64 = 2;
    pub const EPOCH_SHUFFLE: u64 = 3;
    pub const CONDITION_DRAW: u64 = 4;
    pub const EXTRACTOR_INIT: u64 = 5;
    pub const EVAL_FEATURES: u64 = 6;
    pub const SPECTRAL_INIT: u64 = 7;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive an independent ChaCha stream from `seed` and a tag path.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = splitmix(seed);
    for &t in tags {
        state = splitmix(state ^ t.wrapping_mul(0xd134_2543_de82_ef95));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Standard normal sample via Box-Muller, computed in f64 then narrowed.
pub fn normal<T: Scalar, R: Rng>(rng: &mut R) -> T {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen::<f64>();
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    real(z)
}
