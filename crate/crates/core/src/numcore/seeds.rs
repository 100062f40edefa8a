//! Seed derivation for independent random streams.
//!
//! A stream is identified by `(base seed, index, purpose)`. The mapping is a
//! fixed SplitMix64 chain, so derived seeds are stable across platforms and
//! releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a random stream is used for. The discriminants are part of the
/// derivation and must never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedPurpose {
    Init = 1,
    Shuffle = 2,
    Mask = 3,
    Dropout = 4,
    Folds = 5,
    Fold = 6,
    SynthText = 7,
    SynthNoise = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, index: u64, purpose: SeedPurpose) -> u64 {
    let h = splitmix64(base);
    let h = splitmix64(h ^ index);
    splitmix64(h ^ purpose as u64)
}

pub fn stream(base: u64, index: u64, purpose: SeedPurpose) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, index, purpose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    // Values from an independent SplitMix64 implementation. A change here
    // breaks reproducibility of every stored run.
    #[test]
    fn derivation_is_frozen() {
        assert_eq!(derive_seed(42, 0, SeedPurpose::Init), 0xb682_ee25_ce24_109e);
        assert_eq!(derive_seed(42, 1, SeedPurpose::Shuffle), 0xf426_9628_263f_4c12);
        assert_eq!(derive_seed(7, 3, SeedPurpose::Fold), 0x255e_81d8_42b3_916c);
    }

    #[test]
    fn purposes_and_indices_separate_streams() {
        let a = derive_seed(42, 0, SeedPurpose::Mask);
        assert_ne!(a, derive_seed(42, 0, SeedPurpose::Dropout));
        assert_ne!(a, derive_seed(42, 1, SeedPurpose::Mask));
        assert_ne!(a, derive_seed(43, 0, SeedPurpose::Mask));
    }

    #[test]
    fn streams_replay() {
        let mut a = stream(42, 2, SeedPurpose::Shuffle);
        let mut b = stream(42, 2, SeedPurpose::Shuffle);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }
}
