//! Mapping snapshots: atomic JSON persistence and restore.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use peepll_core::crypto::Pseudonym;
use peepll_core::protocol::Mode;
use peepll_core::secure_index::BloomFilter;
use peepll_core::CoreError;

use crate::{MappingEntry, Vault};

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    epoch: u64,
    entries: Vec<SnapshotEntry>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hmac: Option<String>,
    /// Mode B rows key by the plaintext item instead of an HMAC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    item: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bloom: Option<String>,
    pseudonym: String,
    budget: u64,
}

impl Vault {
    /// Writes the mapping atomically (write-temp-rename).
    pub fn persist(&self) -> Result<(), CoreError> {
        let Some(path) = &self.cfg.snapshot_path else {
            return Ok(());
        };
        let state = self.state.lock().unwrap();
        let entries = state
            .pm
            .iter()
            .map(|(key, entry)| {
                let (hmac, item) = match self.cfg.mode {
                    Mode::B => (None, Some(B64.encode(key))),
                    _ => (Some(B64.encode(key)), None),
                };
                SnapshotEntry {
                    hmac,
                    item,
                    bloom: entry.bloom.as_ref().map(|b| B64.encode(b.to_bytes())),
                    pseudonym: entry.pseudonym.to_hex(),
                    budget: entry.budget_used,
                }
            })
            .collect();
        let file = SnapshotFile {
            epoch: state.epoch,
            entries,
        };
        drop(state);
        let json = serde_json::to_string(&file)
            .map_err(|e| CoreError::Config(format!("snapshot encode: {e}")))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads the snapshot if one exists. A missing file yields an empty
    /// mapping; a corrupt file refuses to start.
    pub(crate) fn restore(&self) -> Result<(), CoreError> {
        let Some(path) = &self.cfg.snapshot_path else {
            return Ok(());
        };
        let raw = match std::fs::read(path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let file: SnapshotFile = serde_json::from_slice(&raw)
            .map_err(|e| CoreError::Malformed(format!("corrupt snapshot: {e}")))?;
        let mut state = self.state.lock().unwrap();
        state.epoch = file.epoch;
        state.pm.clear();
        for row in file.entries {
            let key = match (self.cfg.mode, &row.hmac, &row.item) {
                (Mode::B, None, Some(item)) => B64
                    .decode(item)
                    .map_err(|_| CoreError::Malformed("corrupt snapshot: item base64".into()))?,
                (Mode::B, _, _) => {
                    return Err(CoreError::Malformed("corrupt snapshot: mode B rows key by item".into()))
                }
                (_, Some(hmac), None) => {
                    let bytes = B64.decode(hmac).map_err(|_| {
                        CoreError::Malformed("corrupt snapshot: hmac base64".into())
                    })?;
                    if bytes.len() != 32 {
                        return Err(CoreError::Malformed("corrupt snapshot: hmac length".into()));
                    }
                    bytes
                }
                _ => return Err(CoreError::Malformed("corrupt snapshot: missing key".into())),
            };
            let bloom = match row.bloom {
                Some(b64) => {
                    let bytes = B64.decode(&b64).map_err(|_| {
                        CoreError::Malformed("corrupt snapshot: bloom base64".into())
                    })?;
                    Some(BloomFilter::from_bytes(&bytes)?)
                }
                None => None,
            };
            match (self.cfg.mode, &bloom) {
                (Mode::A, None) | (Mode::B | Mode::C | Mode::D, Some(_)) => {}
                _ => return Err(CoreError::Malformed("corrupt snapshot: bloom presence".into())),
            }
            let entry = MappingEntry {
                bloom,
                pseudonym: Pseudonym::from_hex(&row.pseudonym)
                    .map_err(|_| CoreError::Malformed("corrupt snapshot: pseudonym".into()))?,
                budget_used: row.budget,
                created_epoch: file.epoch,
            };
            if state.pm.insert(key, entry).is_some() {
                return Err(CoreError::Malformed("corrupt snapshot: duplicate key".into()));
            }
        }
        Ok(())
    }
}
