//! Seeded, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha20 stream keyed
//! by `(seed, stream)`. Independent streams let parallel workers reproduce
//! exactly the values a sequential run would produce.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Identifier of the generator and Gaussian sampler; part of the output contract.
pub const GENERATOR_ID: &str =
    "chacha20/rand_chacha-0.9/seed_from_u64+set_stream;normal/rand_distr-0.5/ziggurat";

pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_vec(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Packs two indices into one stream id (high/low 32 bits).
pub fn stream_id(major: u64, minor: u64) -> u64 {
    (major << 32) | (minor & 0xffff_ffff)
}

/// Derives an independent seed from `(seed, a, b)` with the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
