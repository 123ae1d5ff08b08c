//! Per-path random substreams.
//!
//! Every path draws from its own ChaCha8 stream. The key is
//! `seed_from_u64(mix64(master_seed ^ domain))` and the 64-bit stream id is
//! the path index, so path `i` is a pure function of `(master_seed, i)` no
//! matter how a parallel map schedules the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tag for walk trajectories.
pub const WALK_DOMAIN: u64 = 0x5741_4c4b_0000_0001;
/// Domain tag for limit-process samples.
pub const LIMIT_DOMAIN: u64 = 0x4c49_4d54_0000_0002;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream(master_seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(master_seed ^ domain));
    rng.set_stream(index);
    rng
}
