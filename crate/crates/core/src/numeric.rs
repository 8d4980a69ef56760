//! Small numeric helpers shared by the statistical modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pairwise (cascade) summation over a slice in index order.
///
/// The result depends only on the order of `values`, so reductions that
/// collect per-item terms into an ordered `Vec` first are reproducible
/// regardless of how the terms were computed.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]. Returns NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance. Returns NaN when fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&dev) / (values.len() as f64 - 1.0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a counter.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(master) ^ counter.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// The crate-wide seeded generator.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Binomial standard error of a rejection-rate estimate.
pub fn binomial_se(rate: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (rate * (1.0 - rate) / n as f64).sqrt()
}
