//! Seed derivation.
//!
//! Every random stream is derived from one user seed plus a role string and
//! optional integer indices:
//!
//! ```text
//! h = FNV-1a-64(role bytes)
//! s = splitmix64(seed ^ h)
//! for i in indices: s = splitmix64(s ^ i)
//! ```
//!
//! The same `(seed, role, indices)` always gives the same stream, regardless
//! of the order in which streams are created or which thread creates them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, role: &str, indices: &[u64]) -> u64 {
    let mut s = splitmix64(seed ^ fnv1a(role.as_bytes()));
    for &i in indices {
        s = splitmix64(s ^ i);
    }
    s
}

pub fn rng_for(seed: u64, role: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, role, indices))
}
