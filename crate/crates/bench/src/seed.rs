//! Per-cell random streams. Each cell's stream id is a hash of its key, so
//! adding cells to a grid never changes the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for `key` under `root`.
pub fn stream_id(root: u64, key: &str) -> u64 {
    key.bytes().fold(splitmix64(root), |h, b| splitmix64(h ^ u64::from(b)))
}

/// Generator for `key`: the root-seeded ChaCha8 on the key's stream.
pub fn cell_rng(root: u64, key: &str) -> (ChaCha8Rng, u64) {
    let stream = stream_id(root, key);
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    (rng, stream)
}
