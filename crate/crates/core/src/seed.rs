//! Seed derivation.
//!
//! Every random stream in a run is derived from the master seed with
//! `derive(master, stream, index)`: the three words are folded through the
//! SplitMix64 finalizer, so sub-seeds are independent of the order in which
//! episodes are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used throughout the crate.
pub mod stream {
    pub const EPISODE: u64 = 0x45_50_49;
    pub const AGENT: u64 = 0x41_47_54;
    pub const NETWORK: u64 = 0x4e_45_54;
    pub const POLICY: u64 = 0x50_4f_4c;
    pub const EVAL: u64 = 0x45_56_4c;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for item `index` of stream `stream` under `master`.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_streams_and_indices() {
        let a = derive(7, stream::EPISODE, 0);
        assert_ne!(a, derive(7, stream::EPISODE, 1));
        assert_ne!(a, derive(7, stream::POLICY, 0));
        assert_ne!(a, derive(8, stream::EPISODE, 0));
        assert_eq!(a, derive(7, stream::EPISODE, 0));
    }
}
