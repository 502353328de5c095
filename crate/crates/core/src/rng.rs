//! Counter-based seed splitting. Every random draw in the crate comes from a
//! ChaCha8 stream selected by `(master seed, purpose, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Covariates = 1,
    Noise = 2,
    Halfspace = 3,
    Signs = 4,
    PowerStart = 5,
    Split = 6,
    Probe = 7,
    Repeat = 8,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix(splitmix(purpose as u64) ^ index));
    rng
}

/// Derive a child seed, used when a whole sub-run needs its own master seed.
pub fn child_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix(seed ^ splitmix((purpose as u64) << 32 ^ index))
}
