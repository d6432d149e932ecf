//! Deterministic random-stream derivation.
//!
//! Every stochastic component draws from its own ChaCha stream keyed by a
//! label path such as `(seed, "pair", treatment, pair_id, role)`. Streams never
//! share state, so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of keys into a single 64-bit stream key.
pub fn stream_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Hashes a short ASCII label into a key component.
pub fn label(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(stream_key(seed, path))
}
