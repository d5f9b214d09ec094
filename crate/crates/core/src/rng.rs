//! Seed derivation for independent random streams.
//!
//! Every stochastic task (one generated graph, one training sample, one epoch
//! shuffle) draws from its own ChaCha8 stream. The stream seed is the first
//! eight bytes (little-endian) of
//!
//! ```text
//! SHA-256( global_seed as u64 LE || len(tag) as u64 LE || tag bytes || index as u64 LE )
//! ```
//!
//! so changing the global seed, the role tag, or the index yields an unrelated
//! stream, and results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(global_seed: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(global_seed: u64, tag: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(global_seed, tag, index))
}
