use sha2::{Digest, Sha256};

/// Stable per-stage seed: the first 8 bytes of `sha256(seed ‖ stage)`.
pub fn sub_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
