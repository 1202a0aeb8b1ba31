//! Seeding rules.
//!
//! Every random stream in the crate is a `ChaCha8Rng`, which produces the
//! same sequence on every platform. Child seeds are derived from a parent
//! seed and a path of indices with splitmix64 finalization, so a rollout's
//! stream depends only on (master seed, iteration, rollout index) and not
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// The splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `seed`, one splitmix round per component.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Domain tags keep streams for different purposes apart.
pub(crate) mod stream {
    pub const ROLLOUT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const HOLDOUT: u64 = 3;
    pub const INSTANCE: u64 = 5;
    pub const EVAL: u64 = 6;
}
