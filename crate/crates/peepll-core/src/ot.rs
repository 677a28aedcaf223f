//! 1-out-of-N oblivious transfer between the PVault (sender) and a Depositor
//! (receiver).
//!
//! The sender publishes `s = g^y` once. Per transfer the receiver commits to
//! an index `i` by sending `r = s^i * g^x` and derives `k_i = H(s||r||s^x)`;
//! the sender derives `k_j = H(s||r||r^y / t^j)` for every entry, with
//! `t = s^y`. The two sides agree exactly at `j = i`. Each sealed entry also
//! carries a per-entry locator tag `Mac(k_j, discriminator_j)` so the receiver
//! can recognise its own entry without seeing any foreign discriminator.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::crypto::{tag, TAG_LEN};
use crate::group::{GroupElement, GroupParams};
use crate::CoreError;

/// Long-lived sender side: secret `y`, public key `s = g^y`, cached `t = s^y`.
#[derive(Debug, Clone)]
pub struct OtSenderState {
    y: BigUint,
    s: GroupElement,
    t: GroupElement,
}

/// Single-transfer receiver side, committed to one index.
#[derive(Debug, Clone)]
pub struct OtReceiverState {
    pub index: u64,
    r: GroupElement,
    key: [u8; TAG_LEN],
}

/// One sealed mapping entry: locator tag plus AEAD ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtSealedEntry {
    pub idx: [u8; TAG_LEN],
    pub ct: Vec<u8>,
}

/// The sender's response to one transfer: every entry sealed under that
/// transfer's key schedule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OtCiphertextSet {
    pub entries: Vec<OtSealedEntry>,
}

/// Outcome of opening a set against the receiver's own discriminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OtOpen {
    /// The receiver's entry was located and decrypted.
    Found(Vec<u8>),
    /// No entry carries the receiver's locator tag (new-identifier case).
    NotFound,
}

pub fn sender_init<R: RngCore + CryptoRng>(group: &GroupParams, rng: &mut R) -> OtSenderState {
    sender_from_scalar(group, group.random_scalar(rng))
}

/// Deterministic sender construction from a known scalar, for tests and
/// cross-implementation checks.
pub fn sender_from_scalar(group: &GroupParams, y: BigUint) -> OtSenderState {
    let s = group.exp(&group.generator(), &y);
    let t = group.exp(&s, &y);
    OtSenderState { y, s, t }
}

impl OtSenderState {
    pub fn public_key(&self) -> &GroupElement {
        &self.s
    }

    /// Test-support accessor for brute-force verification of `t = s^y`.
    pub fn blinding_base(&self) -> &GroupElement {
        &self.t
    }
}

/// Receiver key derivation for index `i` of an `n`-entry transfer.
pub fn receiver_derive<R: RngCore + CryptoRng>(
    group: &GroupParams,
    sender_key: &GroupElement,
    index: u64,
    n: u64,
    rng: &mut R,
) -> Result<OtReceiverState, CoreError> {
    if index >= n {
        return Err(CoreError::Config(format!("ot index {index} out of range {n}")));
    }
    Ok(receiver_from_scalar(
        group,
        sender_key,
        index,
        group.random_scalar(rng),
    ))
}

/// Deterministic receiver construction from a known blinding scalar.
pub fn receiver_from_scalar(
    group: &GroupParams,
    sender_key: &GroupElement,
    index: u64,
    x: BigUint,
) -> OtReceiverState {
    let blind = group.exp(&group.generator(), &x);
    let r = group.mul(&group.exp_u64(sender_key, index), &blind);
    let dh = group.exp(sender_key, &x);
    let key = derive_key(group, sender_key, &r, &dh);
    OtReceiverState { index, r, key }
}

impl OtReceiverState {
    pub fn point(&self) -> &GroupElement {
        &self.r
    }

    pub fn key(&self) -> &[u8; TAG_LEN] {
        &self.key
    }
}

/// Sender-side key schedule for a received point: `k_j = H(s||r||r^y / t^j)`.
pub fn sender_derive_keys(
    state: &OtSenderState,
    group: &GroupParams,
    r: &GroupElement,
    n: u64,
) -> Vec<[u8; TAG_LEN]> {
    let mut value = group.exp(r, &state.y);
    let t_inv = group.invert(&state.t);
    let mut keys = Vec::with_capacity(n as usize);
    for _ in 0..n {
        keys.push(derive_key(group, &state.s, r, &value));
        value = group.mul(&value, &t_inv);
    }
    keys
}

/// Key hash `H(s || r || dh)` over length-prefixed fixed-width encodings.
/// Salting with `s` and `r` scopes the oracle to the protocol session.
fn derive_key(
    group: &GroupParams,
    s: &GroupElement,
    r: &GroupElement,
    dh: &GroupElement,
) -> [u8; TAG_LEN] {
    let mut hasher = Sha256::new();
    for elem in [s, r, dh] {
        let bytes = group.encode(elem);
        hasher.update((bytes.len() as u32).to_be_bytes());
        hasher.update(&bytes);
    }
    hasher.finalize().into()
}

fn cipher(key: &[u8; TAG_LEN]) -> ChaCha20Poly1305 {
    ChaCha20Poly1305::new(Key::from_slice(key))
}

// Keys are single-use per transfer, so a fixed nonce is sound.
const ZERO_NONCE: [u8; 12] = [0u8; 12];

/// Seals one `(discriminator, plaintext)` pair per key. Entry `j` carries the
/// locator `Mac(k_j, discriminator_j)` and the AEAD-sealed plaintext.
pub fn seal_entries(
    keys: &[[u8; TAG_LEN]],
    payloads: &[(Vec<u8>, Vec<u8>)],
) -> OtCiphertextSet {
    assert_eq!(keys.len(), payloads.len());
    let entries = keys
        .iter()
        .zip(payloads)
        .map(|(key, (discriminator, plaintext))| {
            let ct = cipher(key)
                .encrypt(Nonce::from_slice(&ZERO_NONCE), plaintext.as_slice())
                .expect("chacha20poly1305 encrypt is infallible");
            OtSealedEntry {
                idx: tag(key, discriminator),
                ct,
            }
        })
        .collect();
    OtCiphertextSet { entries }
}

/// Locates the entry tagged for `own_discriminator` and decrypts it.
///
/// An absent locator is the ordinary new-identifier outcome. A located entry
/// that fails authenticated decryption means the sender misbehaved.
pub fn receiver_open(
    set: &OtCiphertextSet,
    state: &OtReceiverState,
    own_discriminator: &[u8],
) -> Result<OtOpen, CoreError> {
    let probe = tag(&state.key, own_discriminator);
    let Some(entry) = set.entries.iter().find(|e| e.idx == probe) else {
        return Ok(OtOpen::NotFound);
    };
    let plaintext = cipher(&state.key)
        .decrypt(Nonce::from_slice(&ZERO_NONCE), entry.ct.as_slice())
        .map_err(|_| {
            CoreError::Protocol("located ot entry failed authenticated decryption".into())
        })?;
    Ok(OtOpen::Found(plaintext))
}

/// Decryption attempt with a bare key, used by tests and the attack oracle.
pub fn try_decrypt(key: &[u8; TAG_LEN], ct: &[u8]) -> Option<Vec<u8>> {
    cipher(key).decrypt(Nonce::from_slice(&ZERO_NONCE), ct).ok()
}
