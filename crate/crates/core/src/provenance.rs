//! The `{tool_version, config_hash, seed}` stamp every output carries.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::TOOL_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Provenance {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// Borrowing stamp for each item, for JSON-lines output.
    pub fn stamp_all<'a, T>(&self, items: &'a [T]) -> Vec<Stamped<&'a T>> {
        items.iter().map(|item| Stamped::new(item, self.clone())).collect()
    }

    /// Hash of a value's compact JSON serialization.
    pub fn hash_json<T: Serialize>(value: &T) -> String {
        let bytes = serde_json::to_vec(value).expect("configuration serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Any record with the provenance stamp flattened alongside its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    #[serde(flatten)]
    pub item: T,
    #[serde(flatten)]
    pub provenance: Provenance,
}

impl<T> Stamped<T> {
    pub fn new(item: T, provenance: Provenance) -> Self {
        Stamped { item, provenance }
    }
}

/// Write `item` as pretty JSON with the stamp flattened in.
pub fn write_stamped_json<T: Serialize>(path: &Path, item: &T, provenance: &Provenance) -> Result<()> {
    let text = serde_json::to_string_pretty(&Stamped::new(item, provenance.clone())).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
