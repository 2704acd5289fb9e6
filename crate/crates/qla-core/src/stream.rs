//! Deterministic counter-based random streams.
//!
//! Every replicate draws from a child stream keyed by (master seed, domain
//! label, replicate index), so results do not depend on how work is scheduled
//! across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Child stream for replicate `index` within the labelled `domain`.
pub fn child_stream(master_seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(master_seed ^ splitmix64(fnv1a(domain.as_bytes())));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(index);
    rng
}
