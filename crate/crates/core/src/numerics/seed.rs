//! Deterministic seed derivation.
//!
//! A cell seed is obtained by folding each coordinate into the master seed
//! with the SplitMix64 finaliser:
//!
//! ```text
//! s_0 = mix(master)
//! s_k = mix(s_{k-1} ^ mix(c_k + 0x9E3779B97F4A7C15))
//! ```
//!
//! so that `derive_seed(m, &[i, j])` is stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |s, &c| splitmix64(s ^ splitmix64(c.wrapping_add(GOLDEN))))
}

/// Independent generator for sample `index` of the stream keyed by
/// `(seed, tag)`. Streams do not depend on how samples are scheduled.
pub fn sample_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag]));
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_order_sensitive() {
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }

    #[test]
    fn sample_streams_are_distinct_and_reproducible() {
        use rand::Rng;
        let a: u64 = sample_rng(1, 2, 3).random();
        let b: u64 = sample_rng(1, 2, 3).random();
        let c: u64 = sample_rng(1, 2, 4).random();
        let d: u64 = sample_rng(1, 3, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
