//! Keyed ChaCha8 streams.
//!
//! Every random quantity is a pure function of `(seed, domain, tag, stream)`:
//! the first three are hashed into the 256-bit ChaCha key and `stream` selects
//! the 64-bit ChaCha stream id. Path `i` uses stream `i`, so its draws never
//! depend on how many other paths exist or which worker runs them.
//!
//! Normals come from `rand_distr::StandardNormal` (ziggurat). Changing that
//! sampler changes every pinned-seed result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const DOMAIN_INCREMENTS: u64 = 0x01;
pub(crate) const DOMAIN_BRIDGE: u64 = 0x02;
pub(crate) const DOMAIN_TAMING: u64 = 0x03;
pub(crate) const DOMAIN_SAMPLER: u64 = 0x04;
pub(crate) const DOMAIN_REGULARITY: u64 = 0x05;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn keyed_stream(seed: u64, domain: u64, tag: u64, stream: u64) -> ChaCha8Rng {
    let mut state = mix64(mix64(mix64(seed) ^ domain) ^ tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[inline]
pub(crate) fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
