//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha stream keyed by the master
//! seed plus a stable label, so the result of one unit of work never
//! depends on the order in which other units were processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to fold string labels into seeds.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix(master);
    for &p in parts {
        s = splitmix(s ^ splitmix(p));
    }
    s
}

pub fn stream(master: u64, parts: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}

/// Stream keyed by a string label and extra integer parts.
pub fn labeled(master: u64, label: &str, parts: &[u64]) -> Rng {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(hash_str(label));
    all.extend_from_slice(parts);
    stream(master, &all)
}
