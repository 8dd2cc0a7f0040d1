//! Provenance stamps written into every output file.

use sha2::{Digest, Sha256};

pub const STAGE_VERSION: &str = "1";

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

/// `# config_hash=<h> seed=<s> stage=<name> version=<v>`
pub fn provenance_line(config_hash: &str, seed: u64, stage: &str) -> String {
    format!("# config_hash={config_hash} seed={seed} stage={stage} version={STAGE_VERSION}")
}
