//! Named, independent random sub-streams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Streams in use. Distinct streams never share keystream.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const SAMPLE: u64 = 5;
    pub const CORRUPT: u64 = 6;
    pub const TEST_AUGMENT: u64 = 7;
    pub const SPLIT: u64 = 8;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `index`-th generator (sample, epoch, ...) of `stream` under `seed`.
pub fn substream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed) ^ splitmix(index.wrapping_add(0x51_7CC1)));
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = substream(7, stream::SHUFFLE, 3).random();
        assert_eq!(a, substream(7, stream::SHUFFLE, 3).random::<u64>());
        assert_ne!(a, substream(7, stream::AUGMENT, 3).random::<u64>());
        assert_ne!(a, substream(7, stream::SHUFFLE, 4).random::<u64>());
        assert_ne!(a, substream(8, stream::SHUFFLE, 3).random::<u64>());
    }
}
