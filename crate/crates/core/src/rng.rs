//! Seeded, splittable random streams.
//!
//! Every stochastic operation derives its generator from a `(seed, domain,
//! index)` triple. The domain separates unrelated consumers (training data,
//! partition construction, calibration replicates, ...) and the index selects
//! one of 2^64 ChaCha streams, so replicate `i` sees the same numbers no matter
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Consumer domains. Values are arbitrary but frozen: changing one changes
/// every table and report produced with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Partition = 0x5154_0001,
    BinProbabilities = 0x5154_0002,
    Calibration = 0x5154_0003,
    BatchCalibration = 0x5154_0004,
    Training = 0x5154_0005,
    Stream = 0x5154_0006,
    Split = 0x5154_0007,
    Jitter = 0x5154_0008,
    Bootstrap = 0x5154_0009,
    Run = 0x5154_000a,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> Rng {
    let mut state = seed ^ (domain as u64).rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, used where an API takes a plain `u64` seed.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let mut state = seed ^ (domain as u64).rotate_left(32) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}
