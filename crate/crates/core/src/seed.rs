//! Order-independent seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hashes the labelled parts into a 64-bit seed. Parts are length-prefixed so
/// `["ab", "c"]` and `["a", "bc"]` differ.
pub fn derive_seed<S: AsRef<str>>(parts: &[S]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref().as_bytes();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for<S: AsRef<str>>(parts: &[S]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
