//! Seed plumbing. Every random quantity in the crate is drawn from a
//! `ChaCha8Rng` whose seed is derived from a master seed and a stream tag, so
//! results never depend on thread scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const ROTATION: u64 = 2;
    pub const COMPLEMENT: u64 = 3;
    pub const SQRT_LAMBDA: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const DESIGN: u64 = 6;
    pub const COEFFICIENTS: u64 = 7;
    pub const PIPELINE: u64 = 8;
    pub const TRIAL: u64 = 9;
    pub const SETTING: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, tag)`. Distinct tags give unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Standard Gaussian matrix, filled column by column.
pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}
