//! Counter-addressed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose key
//! is derived from `(seed, domain)`, whose stream id is an item index (trial,
//! Monte Carlo sample, ...) and whose word position selects a channel. A draw
//! is therefore a pure function of `(seed, domain, index, channel)` and
//! never depends on which thread or in what order it is produced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates independent uses of the same user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    DeviceAssignment = 1,
    MeasurementNoise = 2,
    MonteCarlo = 3,
    TrialSeed = 4,
    Synthetic = 5,
}

/// Words reserved per channel (2^32 u32 words).
const CHANNEL_STRIDE: u128 = 1 << 32;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed family of streams for one `(seed, domain)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(seed: u64, domain: Domain) -> Self {
        let mut state = seed ^ (domain as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        StreamKey { key }
    }

    /// Generator for `(index, channel)`.
    pub fn stream(&self, index: u64, channel: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng.set_word_pos(u128::from(channel) * CHANNEL_STRIDE);
        rng
    }
}

/// Derives a child seed, e.g. the per-trial seed from a base seed.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    use rand::RngCore;
    StreamKey::new(seed, domain).stream(index, 0).next_u64()
}
