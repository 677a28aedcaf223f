//! Prime-order multiplicative group arithmetic for the oblivious transfer
//! protocol.
//!
//! Elements live in the order-`q` subgroup of `Z_p*` where `p = 2q + 1` is a
//! safe prime and `g = 4` generates the subgroup. Two profiles exist: a
//! 3072-bit production group and a small group whose order fits in 17 bits so
//! that tests can brute-force discrete logs.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use std::sync::OnceLock;

use crate::CoreError;

/// RFC 3526 3072-bit MODP prime (group 15). Safe prime; (p-1)/2 is prime.
const MODP_3072_HEX: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74",
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437",
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05",
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB",
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718",
    "3995497CEA956AE515D2261898FA051015728E5A8AAAC42DAD33170D04507A33",
    "A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7",
    "ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864",
    "D87602733EC86A64521F2B18177B200CBBE117577A615D6C770988C0BAD946E2",
    "08E24FA074E5AB3143DB5BFCE0FD108E4B82D120A93AD2CAFFFFFFFFFFFFFFFF",
);

/// Selects between the production group and the small test group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    Production,
    Test,
}

impl std::str::FromStr for GroupId {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s {
            "production" => Ok(GroupId::Production),
            "test" => Ok(GroupId::Test),
            other => Err(CoreError::Config(format!("unknown group profile: {other}"))),
        }
    }
}

/// A validated member of the order-`q` subgroup.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

/// Group parameters: modulus `p`, subgroup order `q`, generator `g`.
#[derive(Debug, Clone)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
    elem_len: usize,
}

static PRODUCTION: OnceLock<GroupParams> = OnceLock::new();
static TEST: OnceLock<GroupParams> = OnceLock::new();

impl GroupParams {
    pub fn from_id(id: GroupId) -> &'static GroupParams {
        match id {
            GroupId::Production => PRODUCTION.get_or_init(|| {
                let p = BigUint::parse_bytes(MODP_3072_HEX.as_bytes(), 16).unwrap();
                let q = (&p - 1u32) >> 1;
                GroupParams::new(p, q, BigUint::from(4u32))
            }),
            GroupId::Test => TEST.get_or_init(|| {
                // q = 65393, p = 2q + 1 = 130787, both prime; ord(4) = q.
                GroupParams::new(
                    BigUint::from(130787u32),
                    BigUint::from(65393u32),
                    BigUint::from(4u32),
                )
            }),
        }
    }

    fn new(p: BigUint, q: BigUint, g: BigUint) -> Self {
        let elem_len = (p.bits() as usize).div_ceil(8);
        GroupParams { p, q, g, elem_len }
    }

    pub fn order(&self) -> &BigUint {
        &self.q
    }

    /// Byte length of a serialized element for this profile.
    pub fn element_len(&self) -> usize {
        self.elem_len
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.g.clone())
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    /// Uniform scalar in [1, q).
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> BigUint {
        let one = BigUint::one();
        rng.gen_biguint_range(&one, &self.q)
    }

    pub fn exp(&self, base: &GroupElement, exponent: &BigUint) -> GroupElement {
        GroupElement(base.0.modpow(&(exponent % &self.q), &self.p))
    }

    /// `g^exponent` for a small integer exponent.
    pub fn exp_u64(&self, base: &GroupElement, exponent: u64) -> GroupElement {
        self.exp(base, &BigUint::from(exponent))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    pub fn div(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.mul(a, &self.invert(b))
    }

    pub fn invert(&self, a: &GroupElement) -> GroupElement {
        // p prime, so a^(p-2) = a^-1.
        let exp = &self.p - 2u32;
        GroupElement(a.0.modpow(&exp, &self.p))
    }

    /// Fixed-length big-endian encoding.
    pub fn encode(&self, e: &GroupElement) -> Vec<u8> {
        let mut out = vec![0u8; self.elem_len];
        let bytes = e.0.to_bytes_be();
        out[self.elem_len - bytes.len()..].copy_from_slice(&bytes);
        out
    }

    /// Decodes and validates subgroup membership; rejects anything else.
    pub fn decode(&self, bytes: &[u8]) -> Result<GroupElement, CoreError> {
        if bytes.len() != self.elem_len {
            return Err(CoreError::InvalidGroupElement("wrong length".into()));
        }
        let v = BigUint::from_bytes_be(bytes);
        self.validate(v)
    }

    fn validate(&self, v: BigUint) -> Result<GroupElement, CoreError> {
        if v.is_zero() || v >= self.p {
            return Err(CoreError::InvalidGroupElement("out of range".into()));
        }
        if !v.modpow(&self.q, &self.p).is_one() {
            return Err(CoreError::InvalidGroupElement("not in subgroup".into()));
        }
        Ok(GroupElement(v))
    }
}

impl GroupElement {
    /// Raw value accessor for tests that brute-force discrete logs.
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}
