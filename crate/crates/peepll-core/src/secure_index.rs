//! Bloom-filter secure indexes: keyed trapdoors over lookup tokens, blinding
//! bits, and the false-positive parameterization that drives how many
//! spurious mapping entries a lookup matches.

use rand::Rng;

use crate::crypto::{prf_position, IndexKeySet, TAG_LEN};
use crate::CoreError;

/// A fixed-size bit array. Bit `i` maps to `byte[i/8]`, MSB first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    m: u32,
    bits: Vec<u8>,
}

impl BloomFilter {
    pub fn empty(m: u32) -> Self {
        BloomFilter {
            m,
            bits: vec![0u8; m.div_ceil(8) as usize],
        }
    }

    pub fn size(&self) -> u32 {
        self.m
    }

    pub fn set(&mut self, pos: u32) {
        assert!(pos < self.m, "position {pos} out of range {}", self.m);
        self.bits[(pos / 8) as usize] |= 1 << (7 - pos % 8);
    }

    pub fn get(&self, pos: u32) -> bool {
        if pos >= self.m {
            return false;
        }
        (self.bits[(pos / 8) as usize] >> (7 - pos % 8)) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.bits.iter().map(|b| b.count_ones()).sum()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BloomFilter) -> bool {
        self.m == other.m
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(a, b)| a & !b == 0)
    }

    /// Wire encoding: 4-byte big-endian size, then the packed bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bits.len());
        out.extend_from_slice(&self.m.to_be_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() < 4 {
            return Err(CoreError::Malformed("filter too short".into()));
        }
        let m = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let expected = m.div_ceil(8) as usize;
        if bytes.len() != 4 + expected {
            return Err(CoreError::Malformed("filter length mismatch".into()));
        }
        // Trailing bits past m must be zero so encodings stay canonical.
        let bits = bytes[4..].to_vec();
        if m % 8 != 0 {
            let last = bits[expected - 1];
            if last & ((1u16 << (8 - m % 8)) as u8).wrapping_sub(1) != 0 {
                return Err(CoreError::Malformed("nonzero padding bits".into()));
            }
        }
        Ok(BloomFilter { m, bits })
    }
}

/// Filter parameterization derived from a target false-positive rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BloomParams {
    /// Target false-positive rate in (0, 1).
    pub fp: f64,
    /// Identifier capacity the filter size is computed for.
    pub n: u64,
    /// Number of index keys; even, compensated for half-trapdoor lookups.
    pub k_star: u32,
    /// Filter size in bits.
    pub m: u32,
    /// Blinding bits added to stored filters.
    pub blind_bits: u32,
}

impl BloomParams {
    /// Derives `k*` and `m` from the target rate and capacity.
    ///
    /// `k* = ceil(-2 log2 fp)` rounded up to even, so that half-key lookup
    /// subsets are exact; `m = ceil(n k* / ln 2)`.
    pub fn derive(fp: f64, n: u64, blind_bits: u32) -> Result<Self, CoreError> {
        if !(fp > 0.0 && fp < 1.0) {
            return Err(CoreError::Config(format!("fp must be in (0,1), got {fp}")));
        }
        if n == 0 {
            return Err(CoreError::Config("capacity must be positive".into()));
        }
        let k_raw = -2.0 * fp.log2();
        let mut k_star = k_raw.ceil() as u32;
        if !k_star.is_multiple_of(2) {
            k_star += 1;
        }
        k_star = k_star.max(2);
        let m = ((n as f64) * (k_star as f64) / std::f64::consts::LN_2).ceil() as u32;
        if blind_bits >= m {
            return Err(CoreError::Config(format!(
                "blind_bits {blind_bits} must be below filter size {m}"
            )));
        }
        Ok(BloomParams {
            fp,
            n,
            k_star,
            m,
            blind_bits,
        })
    }

    /// Same derivation with the capacity computed as `n = r * p * c`
    /// (event rate, retention period, identifiers per event).
    pub fn derive_from_rates(
        fp: f64,
        r_events: f64,
        p_retention: f64,
        c: f64,
        blind_bits: u32,
    ) -> Result<Self, CoreError> {
        if r_events <= 0.0 || p_retention <= 0.0 || c <= 0.0 {
            return Err(CoreError::Config("rates must be positive".into()));
        }
        let n = (r_events * p_retention * c).ceil() as u64;
        Self::derive(fp, n, blind_bits)
    }

    /// Effective lookup rate under half trapdoors, `sqrt(fp)`.
    pub fn fp_prime(&self) -> f64 {
        self.fp.sqrt()
    }
}

/// Filter positions derived from an identifier token under a key subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trapdoor {
    pub positions: Vec<u32>,
    pub keys_used: Vec<u32>,
}

impl Trapdoor {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Trapdoor over all `k*` keys.
pub fn full_trapdoor(keys: &IndexKeySet, token: &[u8; TAG_LEN], m: u32) -> Trapdoor {
    let keys_used: Vec<u32> = (0..keys.len()).collect();
    let positions = keys_used
        .iter()
        .map(|&i| prf_position(keys.key(i), token, m).expect("m >= 2"))
        .collect();
    Trapdoor {
        positions,
        keys_used,
    }
}

/// Trapdoor over a uniformly random half of the keys. The randomized subset
/// obfuscates repeated lookups for the same identifier.
pub fn partial_trapdoor<R: Rng>(
    keys: &IndexKeySet,
    token: &[u8; TAG_LEN],
    m: u32,
    rng: &mut R,
) -> Trapdoor {
    let total = keys.len();
    let take = (total / 2).max(1) as usize;
    let mut keys_used = rand::seq::index::sample(rng, total as usize, take)
        .into_iter()
        .map(|i| i as u32)
        .collect::<Vec<_>>();
    keys_used.sort_unstable();
    let positions = keys_used
        .iter()
        .map(|&i| prf_position(keys.key(i), token, m).expect("m >= 2"))
        .collect();
    Trapdoor {
        positions,
        keys_used,
    }
}

/// True iff every trapdoor position is set in the filter. Never produces a
/// false negative for the token the filter was built from.
pub fn contains(filter: &BloomFilter, t: &Trapdoor) -> bool {
    t.positions.iter().all(|&p| filter.get(p))
}

/// Adds `b` uniformly random bits (sampled with replacement) to a copy of
/// the filter.
pub fn blind<R: Rng>(filter: &BloomFilter, b: u32, rng: &mut R) -> BloomFilter {
    let mut out = filter.clone();
    for _ in 0..b {
        out.set(rng.gen_range(0..out.size()));
    }
    out
}

/// Builds the filter stored in the mapping: the full trapdoor plus `b`
/// blinding bits that force spurious matches on foreign lookups.
pub fn build_stored_filter<R: Rng>(
    keys: &IndexKeySet,
    token: &[u8; TAG_LEN],
    m: u32,
    b: u32,
    rng: &mut R,
) -> BloomFilter {
    let mut filter = BloomFilter::empty(m);
    for pos in &full_trapdoor(keys, token, m).positions {
        filter.set(*pos);
    }
    blind(&filter, b, rng)
}

/// Blinding-bit count that brings the expected fraction of set bits in a
/// stored filter to `target_load`. Sampling is with replacement, so the
/// expected number of draws to reach load L in m bits is
/// `ln(1-L) / ln(1-1/m)`.
pub fn blind_bits_for_load(m: u32, k_star: u32, target_load: f64) -> u32 {
    assert!(target_load > 0.0 && target_load < 1.0);
    let draws = ((1.0 - target_load).ln() / (1.0 - 1.0 / m as f64).ln()).floor() as u32;
    draws.saturating_sub(k_star).min(m - 1)
}
