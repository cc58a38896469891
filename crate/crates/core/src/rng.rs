//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and builds its own ChaCha
//! stream, so results are reproducible across platforms and thread counts.
//! Sub-streams are derived by mixing the parent seed with a label and indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed from `seed`, a label and a list of indices.
pub fn derive(seed: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for b in label.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &i in indices {
        h = splitmix(h ^ i);
    }
    h
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_labels_and_indices() {
        assert_ne!(derive(1, "a", &[0]), derive(1, "b", &[0]));
        assert_ne!(derive(1, "a", &[0]), derive(1, "a", &[1]));
        assert_ne!(derive(1, "a", &[0]), derive(2, "a", &[0]));
        assert_eq!(derive(7, "pool", &[3]), derive(7, "pool", &[3]));
    }
}
