//! Deterministic seed splitting.
//!
//! Child seeds are derived by hashing a path of integers into the base seed
//! with splitmix64, so adding a trial or an asset never shifts the streams of
//! the others.

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Uniform draw in [0, 1) determined entirely by `(base, path)`.
pub fn unit_draw(base: u64, path: &[u64]) -> f64 {
    (derive_seed(base, path) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
