//! Seeded problem generators. ChaCha keeps results identical across
//! platforms and runs for a given seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use trilut::{ActivationView, PackingMode, TernaryMatrix};

/// Mixes a base seed with problem coordinates so distinct problems draw
/// distinct streams while the same problem always sees the same data.
pub fn problem_seed(seed: u64, m: usize, k: usize, n: usize, mode: PackingMode) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    for v in [m as u64, k as u64, n as u64, mode.code() as u64] {
        h ^= v;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random ternary matrix.
pub fn random_ternary(m: usize, k: usize, weight_scale: f32, rng: &mut ChaCha8Rng) -> TernaryMatrix {
    let data: Vec<i8> = (0..m * k).map(|_| rng.random_range(-1..=1)).collect();
    TernaryMatrix::new(m, k, data, weight_scale).expect("generated trits are valid")
}

/// Uniform random INT8 activations in [-127, 127] with unit token scales.
pub fn random_activations_i8(k: usize, n: usize, rng: &mut ChaCha8Rng) -> ActivationView {
    let data: Vec<i8> = (0..k * n).map(|_| rng.random_range(-127..=127)).collect();
    ActivationView::new(k, n, data, vec![1.0; n]).expect("generated activations are valid")
}

/// Standard-normal FP32 activations, token-major (`data[k * N + n]`).
pub fn random_activations_f32(k: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..k * n)
        .map(|_| StandardNormal.sample(rng))
        .collect()
}
