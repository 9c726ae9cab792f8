//! Named random substreams.
//!
//! Every stochastic consumer derives its own generator from the run seed, a
//! stream name and a few integer keys (track id, frame, ...), so the numbers
//! one consumer sees do not depend on how many draws another made or on the
//! order in which targets are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, name: &str, keys: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for b in name.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &k in keys {
        h = splitmix(h ^ splitmix(k));
    }
    h
}

pub fn substream(seed: u64, name: &str, keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name, keys))
}
