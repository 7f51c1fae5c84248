//! Stream derivation for reproducible randomness.
//!
//! A run carries one `u64` seed. Each consumer (simulation call, table row,
//! bootstrap resample) gets its own ChaCha stream selected by a path of
//! indices, so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for the stream addressed by `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let id = path.iter().fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)));
    rng.set_stream(id);
    rng
}
