//! Run provenance embedded in every artifact the tool writes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// Hex SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new<T: Serialize>(config: &T, seed: u64) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), config_hash: config_hash(config), seed }
    }
}

/// SHA-256 of a value's JSON encoding. Struct fields serialize in declaration
/// order and maps are sorted, so equal configurations hash equally.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configuration serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
