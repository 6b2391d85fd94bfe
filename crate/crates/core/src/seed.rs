//! Stable seed derivation. A stage seed depends only on the master seed, the
//! stage name and the strategy label, so adding strategies to a run never
//! shifts the randomness of the others.

use sha2::{Digest, Sha256};

/// First eight bytes (little endian) of SHA-256 over the concatenated parts.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

pub fn derive_seed(master: u64, stage: &str, label: &str) -> u64 {
    stable_hash(&[&master.to_le_bytes(), stage.as_bytes(), label.as_bytes()])
}
