//! Counter-based random streams.
//!
//! Every stochastic component takes a `u64` seed. Where a component needs
//! many independent streams (one per tree, per subsample, per explained
//! record) the stream is selected with ChaCha's 64-bit stream counter rather
//! than by drawing sub-seeds from a shared generator, so stream `i` is the
//! same regardless of how many other streams exist or in which order they are
//! consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; used to fold an index into a seed.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
