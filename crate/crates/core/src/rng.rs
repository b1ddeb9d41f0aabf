//! Seeded random streams.
//!
//! Every random choice in a run is drawn from a ChaCha20 stream whose key is
//! the 64-bit seed in little-endian order, zero-padded to 32 bytes, and whose
//! stream id names the consumer. This keeps runs reproducible and lets another
//! implementation replay a transcript bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// Stream ids used inside one protocol session.
pub mod streams {
    pub const CLIENT: u64 = 1;
    pub const SERVER: u64 = 2;
    pub const QUANTUM_CHANNEL: u64 = 3;
    pub const ADVERSARY: u64 = 4;
    pub const LINK_CLIENT: u64 = 5;
    pub const LINK_SERVER: u64 = 6;
    pub const SETUP: u64 = 7;
    pub const TRIAL_SEEDS: u64 = 8;
    pub const IDEAL: u64 = 9;
}

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Derives the seed of trial `index` from a master seed.
///
/// Trials draw from their own generator so that results do not depend on the
/// order in which trials are executed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = stream_rng(master, streams::TRIAL_SEEDS);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}
