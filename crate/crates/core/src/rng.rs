//! Deterministic random substreams.
//!
//! Every parallel unit of work draws from its own generator, keyed by the run
//! seed and a tuple of integer tags, so results do not depend on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SubRng = ChaCha8Rng;

#[inline]
pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Generator for the substream identified by `(seed, tags)`.
pub fn substream(seed: u64, tags: &[u64]) -> SubRng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}

/// Stream tags shared by the samplers.
pub(crate) mod tag {
    pub const GAUSSIAN_DRAWS: u64 = 1;
    pub const RQMC: u64 = 2;
    pub const RWMH: u64 = 3;
    pub const GIBBS: u64 = 4;
    pub const HMC: u64 = 5;
    pub const SMC_MOVE: u64 = 6;
    pub const SMC_RESAMPLE: u64 = 7;
    pub const VARSEL_INIT: u64 = 8;
    pub const VARSEL_MOVE: u64 = 9;
    pub const VARSEL_RESAMPLE: u64 = 10;
    pub const VARSEL_PROPOSAL: u64 = 11;
    pub const VARSEL_ENUM: u64 = 12;
    pub const VARSEL_GIBBS: u64 = 13;
}
