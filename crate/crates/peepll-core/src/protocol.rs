//! Message schema and canonical wire encoding between Depositors and the
//! PVault.
//!
//! Every message is one line of canonical JSON: object keys sorted, binary
//! fields base64, no insignificant whitespace. The body schema is fixed per
//! (type, mode) pair and unknown fields are rejected, so two implementations
//! cannot drift apart silently.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::Value;

use crate::crypto::{Pseudonym, TAG_LEN};
use crate::ot::{OtCiphertextSet, OtSealedEntry};
use crate::secure_index::BloomFilter;
use crate::CoreError;

/// Upper bound on one encoded message, shared by all transports.
pub const MAX_MESSAGE: usize = 1 << 20;

/// Privacy mechanism selector, agreed between both sides at startup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// HMAC lookup tokens; creation folded into lookup.
    A,
    /// Blinded Bloom lookups over plaintext items.
    B,
    /// Secure-index lookups paired with HMAC discriminators.
    C,
    /// Mode C with OT-hardened responses.
    D,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::A => "A",
            Mode::B => "B",
            Mode::C => "C",
            Mode::D => "D",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s {
            "A" => Ok(Mode::A),
            "B" => Ok(Mode::B),
            "C" => Ok(Mode::C),
            "D" => Ok(Mode::D),
            other => Err(CoreError::Config(format!("unknown mode: {other}"))),
        }
    }
}

/// Wire error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Malformed,
    Capacity,
    Protocol,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::Malformed => "malformed",
            ErrorCode::Capacity => "capacity",
            ErrorCode::Protocol => "protocol",
        }
    }

    fn parse(s: &str) -> Result<Self, CoreError> {
        match s {
            "malformed" => Ok(ErrorCode::Malformed),
            "capacity" => Ok(ErrorCode::Capacity),
            "protocol" => Ok(ErrorCode::Protocol),
            other => Err(CoreError::Malformed(format!("unknown error code: {other}"))),
        }
    }
}

/// Mode-variant lookup token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupToken {
    /// Mode A: the raw HMAC tag.
    Tag([u8; TAG_LEN]),
    /// Mode B: blinded Bloom filter over the item.
    Filter(BloomFilter),
    /// Modes C/D: partial-trapdoor positions, sorted and deduplicated.
    Trapdoor(Vec<u32>),
}

/// Mode-variant lookup reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupReply {
    /// Mode A: same shape for hits and creations.
    Tag {
        token: [u8; TAG_LEN],
        pseudonym: Pseudonym,
    },
    /// Mode B: matching plaintext items with their pseudonyms.
    Items(Vec<(Vec<u8>, Pseudonym)>),
    /// Mode C: matching HMAC discriminators with their pseudonyms.
    Hmacs(Vec<([u8; TAG_LEN], Pseudonym)>),
    /// Mode D: only the size of the match set; payloads follow via OT.
    Count(u64),
}

/// Creation payload for modes B/C/D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CreateBody {
    /// Mode B: plaintext item plus its unblinded filter.
    Item { item: Vec<u8>, filter: BloomFilter },
    /// Modes C/D: HMAC discriminator plus blinded stored filter.
    Hmac {
        hmac: [u8; TAG_LEN],
        filter: BloomFilter,
    },
}

/// Server parameter summary pushed on connect and on epoch rollover.
/// Absent in mode A, which has no filter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSummary {
    pub k_star: u32,
    pub m: u32,
    pub blind_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    LookupRequest(LookupToken),
    LookupResponse(LookupReply),
    CreateRequest(CreateBody),
    CreateResponse { pseudonym: Pseudonym },
    OtPublicKey { key: Vec<u8> },
    OtTransferRequest { point: Vec<u8> },
    OtTransferResponse { set: OtCiphertextSet },
    EpochNotice { params: Option<ParamSummary> },
    Error { code: ErrorCode, detail: String },
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::LookupRequest(_) => "LookupRequest",
            Body::LookupResponse(_) => "LookupResponse",
            Body::CreateRequest(_) => "CreateRequest",
            Body::CreateResponse { .. } => "CreateResponse",
            Body::OtPublicKey { .. } => "OtPublicKey",
            Body::OtTransferRequest { .. } => "OtTransferRequest",
            Body::OtTransferResponse { .. } => "OtTransferResponse",
            Body::EpochNotice { .. } => "EpochNotice",
            Body::Error { .. } => "Error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub mode: Mode,
    pub epoch: u64,
    pub body: Body,
}

impl Message {
    pub fn new(mode: Mode, epoch: u64, body: Body) -> Self {
        Message { mode, epoch, body }
    }

    pub fn error(mode: Mode, epoch: u64, code: ErrorCode, detail: impl Into<String>) -> Self {
        Message {
            mode,
            epoch,
            body: Body::Error {
                code,
                detail: detail.into(),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

fn b64(bytes: &[u8]) -> Value {
    Value::String(B64.encode(bytes))
}

fn body_value(msg: &Message) -> Result<Value, CoreError> {
    let mode = msg.mode;
    let mismatch = || {
        Err(CoreError::Protocol(format!(
            "body {} not valid in mode {}",
            msg.body.type_name(),
            mode.as_str()
        )))
    };
    let mut map = serde_json::Map::new();
    match &msg.body {
        Body::LookupRequest(token) => match (token, mode) {
            (LookupToken::Tag(tag), Mode::A) => {
                map.insert("token".into(), b64(tag));
            }
            (LookupToken::Filter(filter), Mode::B) => {
                map.insert("filter".into(), b64(&filter.to_bytes()));
            }
            (LookupToken::Trapdoor(positions), Mode::C | Mode::D) => {
                let mut sorted = positions.clone();
                sorted.sort_unstable();
                sorted.dedup();
                map.insert(
                    "positions".into(),
                    Value::Array(sorted.into_iter().map(Value::from).collect()),
                );
            }
            _ => return mismatch(),
        },
        Body::LookupResponse(reply) => match (reply, mode) {
            (LookupReply::Tag { token, pseudonym }, Mode::A) => {
                map.insert("pseudonym".into(), Value::String(pseudonym.to_hex()));
                map.insert("token".into(), b64(token));
            }
            (LookupReply::Items(items), Mode::B) => {
                let rows = items
                    .iter()
                    .map(|(item, pseudonym)| {
                        let mut row = serde_json::Map::new();
                        row.insert("item".into(), b64(item));
                        row.insert("pseudonym".into(), Value::String(pseudonym.to_hex()));
                        Value::Object(row)
                    })
                    .collect();
                map.insert("matches".into(), Value::Array(rows));
            }
            (LookupReply::Hmacs(items), Mode::C) => {
                let rows = items
                    .iter()
                    .map(|(hmac, pseudonym)| {
                        let mut row = serde_json::Map::new();
                        row.insert("hmac".into(), b64(hmac));
                        row.insert("pseudonym".into(), Value::String(pseudonym.to_hex()));
                        Value::Object(row)
                    })
                    .collect();
                map.insert("matches".into(), Value::Array(rows));
            }
            (LookupReply::Count(count), Mode::D) => {
                map.insert("count".into(), Value::from(*count));
            }
            _ => return mismatch(),
        },
        Body::CreateRequest(body) => match (body, mode) {
            (CreateBody::Item { item, filter }, Mode::B) => {
                map.insert("filter".into(), b64(&filter.to_bytes()));
                map.insert("item".into(), b64(item));
            }
            (CreateBody::Hmac { hmac, filter }, Mode::C | Mode::D) => {
                map.insert("filter".into(), b64(&filter.to_bytes()));
                map.insert("hmac".into(), b64(hmac));
            }
            _ => return mismatch(),
        },
        Body::CreateResponse { pseudonym } => {
            if mode == Mode::A {
                return mismatch();
            }
            map.insert("pseudonym".into(), Value::String(pseudonym.to_hex()));
        }
        Body::OtPublicKey { key } => {
            if mode != Mode::D {
                return mismatch();
            }
            map.insert("s".into(), b64(key));
        }
        Body::OtTransferRequest { point } => {
            if mode != Mode::D {
                return mismatch();
            }
            map.insert("point".into(), b64(point));
        }
        Body::OtTransferResponse { set } => {
            if mode != Mode::D {
                return mismatch();
            }
            let rows = set
                .entries
                .iter()
                .map(|entry| {
                    let mut row = serde_json::Map::new();
                    row.insert("ct".into(), b64(&entry.ct));
                    row.insert("idx".into(), b64(&entry.idx));
                    Value::Object(row)
                })
                .collect();
            map.insert("set".into(), Value::Array(rows));
        }
        Body::EpochNotice { params } => match (params, mode) {
            (None, Mode::A) => {}
            (Some(p), Mode::B | Mode::C | Mode::D) => {
                map.insert("blind_bits".into(), Value::from(p.blind_bits));
                map.insert("k_star".into(), Value::from(p.k_star));
                map.insert("m".into(), Value::from(p.m));
            }
            _ => return mismatch(),
        },
        Body::Error { code, detail } => {
            map.insert("code".into(), Value::String(code.as_str().into()));
            map.insert("detail".into(), Value::String(detail.clone()));
        }
    }
    Ok(Value::Object(map))
}

/// Encodes to canonical JSON bytes: object keys sorted, compact separators.
pub fn encode(msg: &Message) -> Result<Vec<u8>, CoreError> {
    let mut root = serde_json::Map::new();
    root.insert("body".into(), body_value(msg)?);
    root.insert("epoch".into(), Value::from(msg.epoch));
    root.insert("mode".into(), Value::String(msg.mode.as_str().into()));
    root.insert("type".into(), Value::String(msg.body.type_name().into()));
    let mut out = Vec::with_capacity(128);
    write_canonical(&Value::Object(root), &mut out);
    Ok(out)
}

/// Canonical writer: sorts object keys explicitly so the encoding does not
/// depend on the map implementation behind `serde_json::Value`.
fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            out.push(b'{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend_from_slice(serde_json::to_string(key).unwrap().as_bytes());
                out.push(b':');
                write_canonical(&map[key.as_str()], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        other => out.extend_from_slice(other.to_string().as_bytes()),
    }
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct FieldReader<'a> {
    map: &'a serde_json::Map<String, Value>,
    allowed: &'static [&'static str],
}

impl<'a> FieldReader<'a> {
    fn new(
        map: &'a serde_json::Map<String, Value>,
        allowed: &'static [&'static str],
    ) -> Result<Self, CoreError> {
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CoreError::Malformed(format!("unknown field: {key}")));
            }
        }
        for key in allowed {
            if !map.contains_key(*key) {
                return Err(CoreError::Malformed(format!("missing field: {key}")));
            }
        }
        Ok(FieldReader { map, allowed })
    }

    fn str(&self, key: &str) -> Result<&'a str, CoreError> {
        debug_assert!(self.allowed.contains(&key));
        self.map[key]
            .as_str()
            .ok_or_else(|| CoreError::Malformed(format!("field {key} must be a string")))
    }

    fn u64(&self, key: &str) -> Result<u64, CoreError> {
        self.map[key]
            .as_u64()
            .ok_or_else(|| CoreError::Malformed(format!("field {key} must be an integer")))
    }

    fn u32(&self, key: &str) -> Result<u32, CoreError> {
        self.u64(key)?
            .try_into()
            .map_err(|_| CoreError::Malformed(format!("field {key} out of range")))
    }

    fn bytes(&self, key: &str) -> Result<Vec<u8>, CoreError> {
        B64.decode(self.str(key)?)
            .map_err(|_| CoreError::Malformed(format!("field {key} is not base64")))
    }

    fn tag(&self, key: &str) -> Result<[u8; TAG_LEN], CoreError> {
        self.bytes(key)?
            .try_into()
            .map_err(|_| CoreError::Malformed(format!("field {key} must be {TAG_LEN} bytes")))
    }

    fn array(&self, key: &str) -> Result<&'a [Value], CoreError> {
        self.map[key]
            .as_array()
            .map(Vec::as_slice)
            .ok_or_else(|| CoreError::Malformed(format!("field {key} must be an array")))
    }
}

fn as_object(value: &Value) -> Result<&serde_json::Map<String, Value>, CoreError> {
    value
        .as_object()
        .ok_or_else(|| CoreError::Malformed("expected a JSON object".into()))
}

fn parse_pseudonym(s: &str) -> Result<Pseudonym, CoreError> {
    Pseudonym::from_hex(s)
}

fn parse_filter(bytes: &[u8]) -> Result<BloomFilter, CoreError> {
    BloomFilter::from_bytes(bytes)
}

/// Decodes one message line, rejecting anything that does not match the
/// schema for its (type, mode) pair.
pub fn decode(bytes: &[u8]) -> Result<Message, CoreError> {
    if bytes.len() > MAX_MESSAGE {
        return Err(CoreError::Malformed("message exceeds 1 MiB".into()));
    }
    let root: Value =
        serde_json::from_slice(bytes).map_err(|e| CoreError::Malformed(format!("json: {e}")))?;
    let map = as_object(&root)?;
    let envelope = FieldReader::new(map, &["body", "epoch", "mode", "type"])?;
    let mode: Mode = envelope.str("mode")?.parse()?;
    let epoch = envelope.u64("epoch")?;
    let msg_type = envelope.str("type")?;
    let body_map = as_object(&map["body"])?;

    let body = match (msg_type, mode) {
        ("LookupRequest", Mode::A) => {
            let fields = FieldReader::new(body_map, &["token"])?;
            Body::LookupRequest(LookupToken::Tag(fields.tag("token")?))
        }
        ("LookupRequest", Mode::B) => {
            let fields = FieldReader::new(body_map, &["filter"])?;
            Body::LookupRequest(LookupToken::Filter(parse_filter(&fields.bytes("filter")?)?))
        }
        ("LookupRequest", Mode::C | Mode::D) => {
            let fields = FieldReader::new(body_map, &["positions"])?;
            let mut positions = Vec::new();
            for item in fields.array("positions")? {
                let p = item
                    .as_u64()
                    .and_then(|v| u32::try_from(v).ok())
                    .ok_or_else(|| CoreError::Malformed("positions must be u32".into()))?;
                positions.push(p);
            }
            if positions.is_empty() {
                // an empty trapdoor would vacuously match the whole mapping
                return Err(CoreError::Malformed("positions must not be empty".into()));
            }
            if positions.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CoreError::Malformed(
                    "positions must be sorted and unique".into(),
                ));
            }
            Body::LookupRequest(LookupToken::Trapdoor(positions))
        }
        ("LookupResponse", Mode::A) => {
            let fields = FieldReader::new(body_map, &["pseudonym", "token"])?;
            Body::LookupResponse(LookupReply::Tag {
                token: fields.tag("token")?,
                pseudonym: parse_pseudonym(fields.str("pseudonym")?)?,
            })
        }
        ("LookupResponse", Mode::B) => {
            let fields = FieldReader::new(body_map, &["matches"])?;
            let mut items = Vec::new();
            for row in fields.array("matches")? {
                let row = FieldReader::new(as_object(row)?, &["item", "pseudonym"])?;
                items.push((row.bytes("item")?, parse_pseudonym(row.str("pseudonym")?)?));
            }
            Body::LookupResponse(LookupReply::Items(items))
        }
        ("LookupResponse", Mode::C) => {
            let fields = FieldReader::new(body_map, &["matches"])?;
            let mut items = Vec::new();
            for row in fields.array("matches")? {
                let row = FieldReader::new(as_object(row)?, &["hmac", "pseudonym"])?;
                items.push((row.tag("hmac")?, parse_pseudonym(row.str("pseudonym")?)?));
            }
            Body::LookupResponse(LookupReply::Hmacs(items))
        }
        ("LookupResponse", Mode::D) => {
            let fields = FieldReader::new(body_map, &["count"])?;
            Body::LookupResponse(LookupReply::Count(fields.u64("count")?))
        }
        ("CreateRequest", Mode::B) => {
            let fields = FieldReader::new(body_map, &["filter", "item"])?;
            Body::CreateRequest(CreateBody::Item {
                item: fields.bytes("item")?,
                filter: parse_filter(&fields.bytes("filter")?)?,
            })
        }
        ("CreateRequest", Mode::C | Mode::D) => {
            let fields = FieldReader::new(body_map, &["filter", "hmac"])?;
            Body::CreateRequest(CreateBody::Hmac {
                hmac: fields.tag("hmac")?,
                filter: parse_filter(&fields.bytes("filter")?)?,
            })
        }
        ("CreateResponse", Mode::B | Mode::C | Mode::D) => {
            let fields = FieldReader::new(body_map, &["pseudonym"])?;
            Body::CreateResponse {
                pseudonym: parse_pseudonym(fields.str("pseudonym")?)?,
            }
        }
        ("OtPublicKey", Mode::D) => {
            let fields = FieldReader::new(body_map, &["s"])?;
            Body::OtPublicKey {
                key: fields.bytes("s")?,
            }
        }
        ("OtTransferRequest", Mode::D) => {
            let fields = FieldReader::new(body_map, &["point"])?;
            Body::OtTransferRequest {
                point: fields.bytes("point")?,
            }
        }
        ("OtTransferResponse", Mode::D) => {
            let fields = FieldReader::new(body_map, &["set"])?;
            let mut entries = Vec::new();
            for row in fields.array("set")? {
                let row = FieldReader::new(as_object(row)?, &["ct", "idx"])?;
                entries.push(OtSealedEntry {
                    idx: row.tag("idx")?,
                    ct: row.bytes("ct")?,
                });
            }
            Body::OtTransferResponse {
                set: OtCiphertextSet { entries },
            }
        }
        ("EpochNotice", Mode::A) => {
            FieldReader::new(body_map, &[])?;
            Body::EpochNotice { params: None }
        }
        ("EpochNotice", Mode::B | Mode::C | Mode::D) => {
            let fields = FieldReader::new(body_map, &["blind_bits", "k_star", "m"])?;
            Body::EpochNotice {
                params: Some(ParamSummary {
                    k_star: fields.u32("k_star")?,
                    m: fields.u32("m")?,
                    blind_bits: fields.u32("blind_bits")?,
                }),
            }
        }
        ("Error", _) => {
            let fields = FieldReader::new(body_map, &["code", "detail"])?;
            Body::Error {
                code: ErrorCode::parse(fields.str("code")?)?,
                detail: fields.str("detail")?.to_string(),
            }
        }
        (other, _) => {
            return Err(CoreError::Malformed(format!(
                "no body schema for type {other} in mode {}",
                mode.as_str()
            )))
        }
    };

    Ok(Message { mode, epoch, body })
}

/// Test predicate for Re-use Indistinguishability in mode A: a mapping hit
/// and a fresh creation must answer with the same message type, the same
/// field set, and the same encoded length.
pub fn shape_uniform(hit: &Message, created: &Message) -> bool {
    let schema = |m: &Message| -> Option<(Vec<String>, usize)> {
        if m.mode != Mode::A {
            return None;
        }
        match &m.body {
            Body::LookupResponse(LookupReply::Tag { .. }) => {}
            _ => return None,
        }
        let encoded = encode(m).ok()?;
        let value: Value = serde_json::from_slice(&encoded).ok()?;
        let keys = value["body"].as_object()?.keys().cloned().collect();
        Some((keys, encoded.len()))
    };
    match (schema(hit), schema(created)) {
        (Some((ka, la)), Some((kb, lb))) => ka == kb && la == lb,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn tag_bytes(fill: u8) -> [u8; TAG_LEN] {
        [fill; TAG_LEN]
    }

    fn sample_filter() -> BloomFilter {
        let mut f = BloomFilter::empty(16);
        f.set(1);
        f.set(9);
        f
    }

    fn roundtrip(msg: Message) {
        let bytes = encode(&msg).unwrap();
        assert_eq!(decode(&bytes).unwrap(), msg, "{}", String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn roundtrip_every_message_type() {
        let pn = Pseudonym::from_bytes([0x11; 16]);
        roundtrip(Message::new(
            Mode::A,
            3,
            Body::LookupRequest(LookupToken::Tag(tag_bytes(1))),
        ));
        roundtrip(Message::new(
            Mode::B,
            0,
            Body::LookupRequest(LookupToken::Filter(sample_filter())),
        ));
        roundtrip(Message::new(
            Mode::C,
            1,
            Body::LookupRequest(LookupToken::Trapdoor(vec![3, 17, 90])),
        ));
        roundtrip(Message::new(
            Mode::A,
            3,
            Body::LookupResponse(LookupReply::Tag {
                token: tag_bytes(2),
                pseudonym: pn,
            }),
        ));
        roundtrip(Message::new(
            Mode::B,
            0,
            Body::LookupResponse(LookupReply::Items(vec![(b"10.0.0.1".to_vec(), pn)])),
        ));
        roundtrip(Message::new(
            Mode::C,
            9,
            Body::LookupResponse(LookupReply::Hmacs(vec![(tag_bytes(4), pn)])),
        ));
        roundtrip(Message::new(
            Mode::D,
            9,
            Body::LookupResponse(LookupReply::Count(42)),
        ));
        roundtrip(Message::new(
            Mode::B,
            2,
            Body::CreateRequest(CreateBody::Item {
                item: b"10.2.3.4".to_vec(),
                filter: sample_filter(),
            }),
        ));
        roundtrip(Message::new(
            Mode::D,
            2,
            Body::CreateRequest(CreateBody::Hmac {
                hmac: tag_bytes(5),
                filter: sample_filter(),
            }),
        ));
        roundtrip(Message::new(Mode::C, 2, Body::CreateResponse { pseudonym: pn }));
        roundtrip(Message::new(
            Mode::D,
            0,
            Body::OtPublicKey {
                key: vec![0, 0, 4],
            },
        ));
        roundtrip(Message::new(
            Mode::D,
            0,
            Body::OtTransferRequest {
                point: vec![0, 1, 2],
            },
        ));
        roundtrip(Message::new(
            Mode::D,
            0,
            Body::OtTransferResponse {
                set: OtCiphertextSet {
                    entries: vec![OtSealedEntry {
                        idx: tag_bytes(6),
                        ct: vec![9, 9, 9],
                    }],
                },
            },
        ));
        roundtrip(Message::new(Mode::A, 7, Body::EpochNotice { params: None }));
        roundtrip(Message::new(
            Mode::C,
            7,
            Body::EpochNotice {
                params: Some(ParamSummary {
                    k_star: 14,
                    m: 21,
                    blind_bits: 12,
                }),
            },
        ));
        roundtrip(Message::error(Mode::A, 0, ErrorCode::Capacity, "full"));
    }

    #[test]
    fn encoding_is_canonical_and_sorted() {
        let msg = Message::new(
            Mode::A,
            5,
            Body::LookupRequest(LookupToken::Tag(tag_bytes(0))),
        );
        let line = String::from_utf8(encode(&msg).unwrap()).unwrap();
        assert_eq!(
            line,
            r#"{"body":{"token":"AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA="},"epoch":5,"mode":"A","type":"LookupRequest"}"#
        );
    }

    #[test]
    fn trapdoor_positions_are_canonicalized_on_encode() {
        let msg = Message::new(
            Mode::C,
            0,
            Body::LookupRequest(LookupToken::Trapdoor(vec![9, 3, 9, 1])),
        );
        let decoded = decode(&encode(&msg).unwrap()).unwrap();
        match decoded.body {
            Body::LookupRequest(LookupToken::Trapdoor(p)) => assert_eq!(p, vec![1, 3, 9]),
            other => panic!("unexpected body {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_malformed_inputs() {
        let good = encode(&Message::new(
            Mode::A,
            1,
            Body::LookupRequest(LookupToken::Tag(tag_bytes(3))),
        ))
        .unwrap();
        // truncation
        assert!(decode(&good[..good.len() - 2]).is_err());
        // not json / not an object
        assert!(decode(b"").is_err());
        assert!(decode(b"[1,2]").is_err());
        assert!(decode(b"nonsense").is_err());
        // unknown type
        assert!(decode(br#"{"body":{},"epoch":0,"mode":"A","type":"Bogus"}"#).is_err());
        // unknown mode
        assert!(decode(br#"{"body":{},"epoch":0,"mode":"Z","type":"EpochNotice"}"#).is_err());
        // missing envelope field
        assert!(decode(br#"{"body":{},"mode":"A","type":"EpochNotice"}"#).is_err());
        // extra envelope field
        assert!(
            decode(br#"{"body":{},"epoch":0,"extra":1,"mode":"A","type":"EpochNotice"}"#).is_err()
        );
        // extra body field
        assert!(
            decode(br#"{"body":{"zz":1},"epoch":0,"mode":"A","type":"EpochNotice"}"#).is_err()
        );
        // body schema from the wrong mode
        assert!(decode(
            br#"{"body":{"count":3},"epoch":0,"mode":"C","type":"LookupResponse"}"#
        )
        .is_err());
        // negative epoch
        assert!(decode(br#"{"body":{},"epoch":-1,"mode":"A","type":"EpochNotice"}"#).is_err());
        // unsorted positions
        assert!(decode(
            br#"{"body":{"positions":[5,3]},"epoch":0,"mode":"C","type":"LookupRequest"}"#
        )
        .is_err());
        // empty trapdoor
        assert!(decode(
            br#"{"body":{"positions":[]},"epoch":0,"mode":"C","type":"LookupRequest"}"#
        )
        .is_err());
        // wrong tag length
        assert!(decode(br#"{"body":{"token":"AAAA"},"epoch":0,"mode":"A","type":"LookupRequest"}"#)
            .is_err());
    }

    #[test]
    fn encode_rejects_mode_mismatched_bodies() {
        assert!(encode(&Message::new(
            Mode::B,
            0,
            Body::LookupRequest(LookupToken::Tag(tag_bytes(0)))
        ))
        .is_err());
        assert!(encode(&Message::new(
            Mode::A,
            0,
            Body::OtPublicKey { key: vec![1] }
        ))
        .is_err());
        assert!(encode(&Message::new(
            Mode::A,
            0,
            Body::CreateResponse {
                pseudonym: Pseudonym::from_bytes([0; 16])
            }
        ))
        .is_err());
    }

    #[test]
    fn oversized_message_is_rejected() {
        let big = vec![b'x'; MAX_MESSAGE + 1];
        assert!(decode(&big).is_err());
    }

    #[test]
    fn shape_uniform_accepts_hit_create_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(50);
        let mut mk = |_| {
            let mut token = [0u8; TAG_LEN];
            rng.fill_bytes(&mut token);
            let mut pn = [0u8; 16];
            rng.fill_bytes(&mut pn);
            Message::new(
                Mode::A,
                4,
                Body::LookupResponse(LookupReply::Tag {
                    token,
                    pseudonym: Pseudonym::from_bytes(pn),
                }),
            )
        };
        let hit = mk(());
        let created = mk(());
        assert!(shape_uniform(&hit, &created));
        let other_type = Message::new(Mode::A, 4, Body::EpochNotice { params: None });
        assert!(!shape_uniform(&hit, &other_type));
    }

    #[test]
    fn decode_never_panics_on_arbitrary_bytes() {
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        for _ in 0..2_000 {
            let len = rng.gen_range(0..2048);
            let mut bytes = vec![0u8; len];
            rng.fill_bytes(&mut bytes);
            let _ = decode(&bytes);
        }
        // json-shaped garbage
        for _ in 0..500 {
            let depth = rng.gen_range(1..40);
            let mut s = String::new();
            for _ in 0..depth {
                s.push_str("{\"body\":");
            }
            s.push('1');
            for _ in 0..depth {
                s.push('}');
            }
            let _ = decode(s.as_bytes());
        }
    }
}
