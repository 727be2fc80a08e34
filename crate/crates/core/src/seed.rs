//! Counter-based seed derivation.
//!
//! Every random stream in a run or sweep is keyed by a pure function of the
//! master seed and a path of indices, so results never depend on execution
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Salt for per-iteration SOM seeds.
pub const STREAM_SOM: u64 = 0x534f_4d00;
/// Salt for per-iteration second-layer seeds.
pub const STREAM_LAYER: u64 = 0x4c41_5952;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix `base` with each element of `path` in turn.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
