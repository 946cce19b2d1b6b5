//! Deterministic random number plumbing.
//!
//! Every randomized component (OFDM bits, measurement noise, factor
//! initialization, sketching) derives its own stream from a single root seed
//! and a component tag. Runs with the same root seed are bit-reproducible,
//! and changing how often one component draws never perturbs the others.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Derives a sub-seed from a root seed and a component tag.
///
/// The tag is hashed with FNV-1a and the combined value is passed through a
/// SplitMix64 finalizer, so distinct tags give statistically independent
/// streams.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded generator for the stream identified by `(root, tag)`.
pub fn stream(root: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag))
}

/// One draw from the standard complex normal distribution CN(0, 1): real and
/// imaginary parts are independent N(0, 1/2).
pub fn complex_standard_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_tag_sensitive() {
        assert_eq!(derive_seed(7, "init"), derive_seed(7, "init"));
        assert_ne!(derive_seed(7, "init"), derive_seed(7, "noise"));
        assert_ne!(derive_seed(7, "init"), derive_seed(8, "init"));
    }

    #[test]
    fn streams_reproduce_bit_identical_draws() {
        let mut a = stream(42, "sketch");
        let mut b = stream(42, "sketch");
        for _ in 0..32 {
            let za = complex_standard_normal(&mut a);
            let zb = complex_standard_normal(&mut b);
            assert_eq!(za, zb);
        }
    }
}
