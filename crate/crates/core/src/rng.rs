//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! root seed and a path of integer tags, so results never depend on the
//! order in which parallel workers run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a tag path into a single 64-bit stream seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(root: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}

/// Stream tags used across the crate; kept in one place so two subsystems
/// never draw from the same stream by accident.
pub mod tag {
    pub const MARKOV: u64 = 1;
    pub const GEOMETRY: u64 = 2;
    pub const INIT_ACTOR: u64 = 3;
    pub const INIT_CRITIC: u64 = 4;
    pub const PARAM_SAMPLING: u64 = 5;
    pub const ROLLOUT: u64 = 6;
    pub const EVALUATION: u64 = 7;
    pub const REPLAY: u64 = 8;
    pub const EXPLORATION: u64 = 9;
    pub const SWEEP: u64 = 10;
    pub const CURVE: u64 = 11;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        let d: u64 = stream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
