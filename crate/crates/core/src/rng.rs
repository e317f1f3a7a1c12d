//! Named, hash-derived RNG substreams.
//!
//! Every random draw in a run comes from a stream keyed by
//! `(master seed, stream name, indices)`. Adding a new stream never shifts
//! the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Derives the 32-byte ChaCha key for a named substream.
pub fn stream_key(master: u64, name: &str, indices: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    hasher.finalize().into()
}

pub fn substream(master: u64, name: &str, indices: &[u64]) -> SimRng {
    SimRng::from_seed(stream_key(master, name, indices))
}
