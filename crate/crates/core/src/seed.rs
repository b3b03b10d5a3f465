//! Deterministic seed derivation.
//!
//! Every random stream in the toolkit is a [`ChaCha8Rng`] seeded from a
//! 64-bit value. Child seeds are derived by hashing the parent seed with a
//! label, so results never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a parent seed together with an ordered list of labels.
pub fn derive_seed(parent: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in parent.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    for part in parts {
        for b in part.as_bytes() {
            h = (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    splitmix(h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
