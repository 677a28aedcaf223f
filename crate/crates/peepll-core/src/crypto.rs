//! Keyed primitives shared by Depositors: tagging, key derivation, PRF to
//! filter positions, and truly-random pseudonym generation.
//!
//! All lookup material is derived with HMAC-SHA256 under keys that never
//! reach the PVault. Pseudonyms come from a cryptographic RNG and carry no
//! relation to the identifiers they replace.

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use std::fmt;
use std::path::Path;

use crate::CoreError;

type HmacSha256 = Hmac<Sha256>;

pub const TAG_LEN: usize = 32;
pub const PSEUDONYM_LEN: usize = 16;

/// HMAC-SHA256 tag of `message` under `key`.
pub fn tag(key: &[u8], message: &[u8]) -> [u8; TAG_LEN] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Labelled key derivation: `tag(master, label || 0x00 || index_be8)`.
///
/// The zero separator keeps the epoch-tag and index-key domains disjoint.
pub fn kdf(master: &MasterSecret, label: &str, index: u64) -> [u8; TAG_LEN] {
    debug_assert!(!label.is_empty());
    let mut input = Vec::with_capacity(label.len() + 9);
    input.extend_from_slice(label.as_bytes());
    input.push(0u8);
    input.extend_from_slice(&index.to_be_bytes());
    tag(master.as_bytes(), &input)
}

/// Maps `input` to a filter position in `[0, m)` via the keyed tag.
///
/// Reduction is by modulo; the bias for m far below 2^256 is negligible.
pub fn prf_position(key: &[u8; TAG_LEN], input: &[u8], m: u32) -> Result<u32, CoreError> {
    if m < 2 {
        return Err(CoreError::Config(format!("filter size {m} too small")));
    }
    let digest = tag(key, input);
    let mut acc: u64 = 0;
    for byte in digest {
        acc = ((acc as u128 * 256 + byte as u128) % m as u128) as u64;
    }
    Ok(acc as u32)
}

/// The shared Depositor secret. Never transmitted to the PVault.
#[derive(Clone)]
pub struct MasterSecret {
    key: [u8; 32],
}

impl MasterSecret {
    pub fn from_bytes(key: [u8; 32]) -> Self {
        MasterSecret { key }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        MasterSecret { key }
    }

    /// Loads a key file holding either 32 raw bytes or 64 hex characters.
    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let raw = std::fs::read(path)
            .map_err(|e| CoreError::Config(format!("key file {}: {e}", path.display())))?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &[u8]) -> Result<Self, CoreError> {
        if raw.len() == 32 {
            let mut key = [0u8; 32];
            key.copy_from_slice(raw);
            return Ok(MasterSecret { key });
        }
        let text = std::str::from_utf8(raw)
            .map(str::trim)
            .map_err(|_| CoreError::Config("key file is neither 32 bytes nor hex".into()))?;
        if text.len() == 64 {
            let bytes = hex::decode(text)
                .map_err(|_| CoreError::Config("key file hex decode failed".into()))?;
            let mut key = [0u8; 32];
            key.copy_from_slice(&bytes);
            return Ok(MasterSecret { key });
        }
        Err(CoreError::Config(format!(
            "key file must hold 32 raw bytes or 64 hex chars, got {} bytes",
            raw.len()
        )))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.key
    }
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterSecret(..)")
    }
}

/// Epoch-specific tagging secret `t_i`, derived from the master secret.
#[derive(Debug, Clone)]
pub struct EpochTag {
    pub epoch: u64,
    tag_bytes: [u8; TAG_LEN],
}

impl EpochTag {
    pub fn derive(master: &MasterSecret, epoch: u64) -> Self {
        EpochTag {
            epoch,
            tag_bytes: kdf(master, "epoch", epoch),
        }
    }

    /// Converts an identifier into its epoch-scoped lookup token.
    pub fn token(&self, qid: &[u8]) -> [u8; TAG_LEN] {
        tag(&self.tag_bytes, qid)
    }
}

/// The ordered set of secret index keys `k_1 .. k_r` for trapdoor building.
#[derive(Debug, Clone)]
pub struct IndexKeySet {
    keys: Vec<[u8; TAG_LEN]>,
}

impl IndexKeySet {
    pub fn derive(master: &MasterSecret, count: u32) -> Result<Self, CoreError> {
        if count == 0 || !count.is_multiple_of(2) {
            return Err(CoreError::Config(format!(
                "index key count must be positive and even, got {count}"
            )));
        }
        let keys = (0..count as u64).map(|i| kdf(master, "index-key", i)).collect();
        Ok(IndexKeySet { keys })
    }

    pub fn len(&self) -> u32 {
        self.keys.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, i: u32) -> &[u8; TAG_LEN] {
        &self.keys[i as usize]
    }
}

/// A 16-byte truly-random pseudonym.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pseudonym([u8; PSEUDONYM_LEN]);

impl Pseudonym {
    pub fn from_bytes(bytes: [u8; PSEUDONYM_LEN]) -> Self {
        Pseudonym(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; PSEUDONYM_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CoreError> {
        let bytes = hex::decode(s).map_err(|_| CoreError::Malformed("pseudonym hex".into()))?;
        let arr: [u8; PSEUDONYM_LEN] = bytes
            .try_into()
            .map_err(|_| CoreError::Malformed("pseudonym length".into()))?;
        Ok(Pseudonym(arr))
    }

    /// Text form used when a pseudonym replaces a field in a record.
    pub fn record_string(&self) -> String {
        format!("pn:{}", self.to_hex())
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Draws a fresh pseudonym from the given RNG.
pub fn fresh_pseudonym_with<R: RngCore + CryptoRng>(rng: &mut R) -> Pseudonym {
    let mut bytes = [0u8; PSEUDONYM_LEN];
    rng.fill_bytes(&mut bytes);
    Pseudonym(bytes)
}

/// Draws a fresh pseudonym from the OS RNG. Aborts on RNG failure.
pub fn fresh_pseudonym() -> Pseudonym {
    fresh_pseudonym_with(&mut rand::rngs::OsRng)
}
