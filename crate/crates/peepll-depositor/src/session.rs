//! One Depositor session against the PVault: handshake, per-mode lookup
//! flows, dummy creation, and record rewriting.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use peepll_core::crypto::{EpochTag, IndexKeySet, MasterSecret, Pseudonym, TAG_LEN};
use peepll_core::group::{GroupElement, GroupParams, GroupId};
use peepll_core::ot::{self, OtOpen};
use peepll_core::protocol::{
    Body, CreateBody, ErrorCode, LookupReply, LookupToken, Message, Mode, ParamSummary,
};
use peepll_core::secure_index::{
    blind, build_stored_filter, full_trapdoor, partial_trapdoor, BloomFilter, BloomParams,
};
use peepll_core::transport::{recv_msg, send_msg, Channel};
use peepll_core::CoreError;

use crate::records::{extract_path, replace_path};

/// Traffic counters, mostly for the harness and tests.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SessionCounters {
    pub lookups: u64,
    pub hits: u64,
    pub creates_real: u64,
    pub creates_dummy: u64,
    pub messages_sent: u64,
    pub ot_transfers: u64,
}

pub struct Session {
    chan: Box<dyn Channel>,
    mode: Mode,
    master: MasterSecret,
    params: Option<BloomParams>,
    keys: Option<IndexKeySet>,
    group: &'static GroupParams,
    ot_pubkey: Option<GroupElement>,
    epoch: u64,
    epoch_tag: EpochTag,
    rng: ChaCha20Rng,
    counters: SessionCounters,
}

impl Session {
    /// Performs the connection handshake: reads the vault greeting, verifies
    /// that mode and filter parameters agree with the local configuration,
    /// and caches the OT public key in mode D. A mismatch is a startup
    /// error, not something to limp through.
    pub fn connect(
        mut chan: Box<dyn Channel>,
        master: MasterSecret,
        mode: Mode,
        params: Option<BloomParams>,
        group: GroupId,
        seed: Option<u64>,
    ) -> Result<Self, CoreError> {
        let greeting = recv_msg(chan.as_mut())?.ok_or(CoreError::ChannelClosed)?;
        if greeting.mode != mode {
            return Err(CoreError::Config(format!(
                "vault runs mode {}, configured {}",
                greeting.mode.as_str(),
                mode.as_str()
            )));
        }
        let Body::EpochNotice { params: remote } = greeting.body else {
            return Err(CoreError::Protocol("expected EpochNotice greeting".into()));
        };
        match (mode, params, remote) {
            (Mode::A, None, None) => {}
            (_, Some(local), Some(remote)) => {
                let local = ParamSummary {
                    k_star: local.k_star,
                    m: local.m,
                    blind_bits: local.blind_bits,
                };
                if local != remote {
                    return Err(CoreError::Config(format!(
                        "filter parameters disagree: local {local:?}, vault {remote:?}"
                    )));
                }
            }
            _ => return Err(CoreError::Config("mode/parameter mismatch".into())),
        }

        let group = GroupParams::from_id(group);
        let ot_pubkey = if mode == Mode::D {
            let msg = recv_msg(chan.as_mut())?.ok_or(CoreError::ChannelClosed)?;
            let Body::OtPublicKey { key } = msg.body else {
                return Err(CoreError::Protocol("expected OtPublicKey".into()));
            };
            Some(group.decode(&key)?)
        } else {
            None
        };

        let keys = match params {
            Some(p) => Some(IndexKeySet::derive(&master, p.k_star)?),
            None => None,
        };
        let epoch = greeting.epoch;
        let epoch_tag = EpochTag::derive(&master, epoch);
        let rng = match seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        Ok(Session {
            chan,
            mode,
            master,
            params,
            keys,
            group,
            ot_pubkey,
            epoch,
            epoch_tag,
            rng,
            counters: SessionCounters::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn counters(&self) -> SessionCounters {
        self.counters
    }

    /// Advances the local epoch (anytrust: the Depositor enforces the limit
    /// on its own, regardless of the vault).
    pub fn set_epoch(&mut self, epoch: u64) {
        if epoch != self.epoch {
            self.epoch = epoch;
            self.epoch_tag = EpochTag::derive(&self.master, epoch);
        }
    }

    /// Epoch-scoped lookup token for an identifier.
    pub fn epoch_token(&self, qid: &[u8]) -> [u8; TAG_LEN] {
        self.epoch_tag.token(qid)
    }

    fn adopt_epoch(&mut self, epoch: u64) {
        if epoch > self.epoch {
            self.set_epoch(epoch);
        }
    }

    /// Sends a request and returns the matching response, folding in any
    /// EpochNotice pushed ahead of it and turning Error bodies into errors.
    fn exchange(&mut self, body: Body) -> Result<Message, CoreError> {
        let msg = Message::new(self.mode, self.epoch, body);
        send_msg(self.chan.as_mut(), &msg)?;
        self.counters.messages_sent += 1;
        loop {
            let reply = recv_msg(self.chan.as_mut())?.ok_or(CoreError::ChannelClosed)?;
            match reply.body {
                Body::EpochNotice { .. } => {
                    self.adopt_epoch(reply.epoch);
                    continue;
                }
                Body::Error { code, detail } => {
                    return Err(match code {
                        ErrorCode::Capacity => CoreError::Capacity,
                        ErrorCode::Malformed => CoreError::Malformed(detail),
                        ErrorCode::Protocol => CoreError::Protocol(detail),
                    })
                }
                _ => return Ok(reply),
            }
        }
    }

    /// Replaces every configured QID field in `record`; other fields stay
    /// untouched. Returns the number of replacements.
    pub fn pseudonymise(
        &mut self,
        record: &mut Value,
        qid_paths: &[String],
    ) -> Result<usize, CoreError> {
        let mut replaced = 0;
        for path in qid_paths {
            let Some(qid) = extract_path(record, path) else {
                continue;
            };
            let pseudonym = self.lookup(&qid)?;
            replace_path(record, path, pseudonym.record_string());
            replaced += 1;
        }
        Ok(replaced)
    }

    /// Obtains the pseudonym for one identifier under the session mode.
    pub fn lookup(&mut self, qid: &[u8]) -> Result<Pseudonym, CoreError> {
        self.counters.lookups += 1;
        match self.mode {
            Mode::A => self.lookup_a(qid),
            Mode::B => self.lookup_b(qid),
            Mode::C => self.lookup_c(qid),
            Mode::D => self.lookup_d(qid),
        }
    }

    fn lookup_a(&mut self, qid: &[u8]) -> Result<Pseudonym, CoreError> {
        let token = self.epoch_token(qid);
        let reply = self.exchange(Body::LookupRequest(LookupToken::Tag(token)))?;
        match reply.body {
            Body::LookupResponse(LookupReply::Tag {
                token: echoed,
                pseudonym,
            }) => {
                if echoed != token {
                    return Err(CoreError::Protocol("token echo mismatch".into()));
                }
                Ok(pseudonym)
            }
            other => Err(CoreError::Protocol(format!(
                "unexpected response {}",
                other.type_name()
            ))),
        }
    }

    fn lookup_b(&mut self, qid: &[u8]) -> Result<Pseudonym, CoreError> {
        let params = self.params.expect("mode B has params");
        let keys = self.keys.clone().expect("mode B has keys");
        let token = self.epoch_token(qid);

        // lookup token: the item's full filter plus blinding
        let mut lookup = BloomFilter::empty(params.m);
        for pos in full_trapdoor(&keys, &token, params.m).positions {
            lookup.set(pos);
        }
        let lookup = blind(&lookup, params.blind_bits, &mut self.rng);

        let reply = self.exchange(Body::LookupRequest(LookupToken::Filter(lookup)))?;
        let matches = match reply.body {
            Body::LookupResponse(LookupReply::Items(items)) => items,
            other => {
                return Err(CoreError::Protocol(format!(
                    "unexpected response {}",
                    other.type_name()
                )))
            }
        };
        let hit = matches
            .iter()
            .find(|(item, _)| item.as_slice() == qid)
            .map(|(_, p)| *p);

        match hit {
            Some(pseudonym) => {
                self.counters.hits += 1;
                let (dummy_item, dummy_filter) = self.dummy_item(&keys, params)?;
                self.create_b(dummy_item, dummy_filter, true)?;
                Ok(pseudonym)
            }
            None => {
                let mut stored = BloomFilter::empty(params.m);
                for pos in full_trapdoor(&keys, &token, params.m).positions {
                    stored.set(pos);
                }
                self.create_b(qid.to_vec(), stored, false)
            }
        }
    }

    fn create_b(
        &mut self,
        item: Vec<u8>,
        filter: BloomFilter,
        dummy: bool,
    ) -> Result<Pseudonym, CoreError> {
        let reply = self.exchange(Body::CreateRequest(CreateBody::Item { item, filter }))?;
        if dummy {
            self.counters.creates_dummy += 1;
        } else {
            self.counters.creates_real += 1;
        }
        match reply.body {
            Body::CreateResponse { pseudonym } => Ok(pseudonym),
            other => Err(CoreError::Protocol(format!(
                "unexpected response {}",
                other.type_name()
            ))),
        }
    }

    fn lookup_c(&mut self, qid: &[u8]) -> Result<Pseudonym, CoreError> {
        let params = self.params.expect("mode C has params");
        let keys = self.keys.clone().expect("mode C has keys");
        let token = self.epoch_token(qid);
        let trapdoor = partial_trapdoor(&keys, &token, params.m, &mut self.rng);

        let reply = self.exchange(Body::LookupRequest(LookupToken::Trapdoor(
            trapdoor.positions,
        )))?;
        let matches = match reply.body {
            Body::LookupResponse(LookupReply::Hmacs(items)) => items,
            other => {
                return Err(CoreError::Protocol(format!(
                    "unexpected response {}",
                    other.type_name()
                )))
            }
        };
        let mut hit = None;
        for window in matches.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(CoreError::Protocol("duplicate hmac in match set".into()));
            }
        }
        for (hmac, pseudonym) in &matches {
            if *hmac == token {
                hit = Some(*pseudonym);
            }
        }

        match hit {
            Some(pseudonym) => {
                self.counters.hits += 1;
                // a creation follows every lookup; on a hit it carries a dummy
                let (dummy_token, dummy_filter) = self.dummy_entry(&keys, params)?;
                self.create_cd(dummy_token, dummy_filter, true)?;
                Ok(pseudonym)
            }
            None => {
                let stored =
                    build_stored_filter(&keys, &token, params.m, params.blind_bits, &mut self.rng);
                self.create_cd(token, stored, false)
            }
        }
    }

    fn create_cd(
        &mut self,
        hmac: [u8; TAG_LEN],
        filter: BloomFilter,
        dummy: bool,
    ) -> Result<Pseudonym, CoreError> {
        let reply = self.exchange(Body::CreateRequest(CreateBody::Hmac { hmac, filter }))?;
        if dummy {
            self.counters.creates_dummy += 1;
        } else {
            self.counters.creates_real += 1;
        }
        match reply.body {
            Body::CreateResponse { pseudonym } => Ok(pseudonym),
            other => Err(CoreError::Protocol(format!(
                "unexpected response {}",
                other.type_name()
            ))),
        }
    }

    fn lookup_d(&mut self, qid: &[u8]) -> Result<Pseudonym, CoreError> {
        let params = self.params.expect("mode D has params");
        let keys = self.keys.clone().expect("mode D has keys");
        let sender_key = self
            .ot_pubkey
            .clone()
            .ok_or_else(|| CoreError::Protocol("no OT public key cached".into()))?;
        let token = self.epoch_token(qid);
        let trapdoor = partial_trapdoor(&keys, &token, params.m, &mut self.rng);

        let reply = self.exchange(Body::LookupRequest(LookupToken::Trapdoor(
            trapdoor.positions,
        )))?;
        let count = match reply.body {
            Body::LookupResponse(LookupReply::Count(count)) => count,
            other => {
                return Err(CoreError::Protocol(format!(
                    "unexpected response {}",
                    other.type_name()
                )))
            }
        };

        // The entry's position in the canonically ordered match set is
        // unknown, so run one key derivation per index and open the transfer
        // whose locator tag matches. All `count` transfers run even after a
        // hit: stopping early would tell the vault which index matched.
        let mut found: Option<Vec<u8>> = None;
        for index in 0..count {
            let state =
                ot::receiver_derive(self.group, &sender_key, index, count, &mut self.rng)?;
            let reply = self.exchange(Body::OtTransferRequest {
                point: self.group.encode(state.point()),
            })?;
            self.counters.ot_transfers += 1;
            let set = match reply.body {
                Body::OtTransferResponse { set } => set,
                other => {
                    return Err(CoreError::Protocol(format!(
                        "unexpected response {}",
                        other.type_name()
                    )))
                }
            };
            match ot::receiver_open(&set, &state, &token)? {
                OtOpen::Found(plaintext) => {
                    if found.is_some() {
                        return Err(CoreError::Protocol(
                            "multiple transfers matched the discriminator".into(),
                        ));
                    }
                    found = Some(plaintext);
                }
                OtOpen::NotFound => {}
            }
        }

        match found {
            Some(plaintext) => {
                if plaintext.len() != TAG_LEN + 16 || plaintext[..TAG_LEN] != token {
                    return Err(CoreError::Protocol("sealed payload mismatch".into()));
                }
                let pseudonym =
                    Pseudonym::from_bytes(plaintext[TAG_LEN..].try_into().unwrap());
                self.counters.hits += 1;
                let (dummy_token, dummy_filter) = self.dummy_entry(&keys, params)?;
                self.create_cd(dummy_token, dummy_filter, true)?;
                Ok(pseudonym)
            }
            None => {
                let stored =
                    build_stored_filter(&keys, &token, params.m, params.blind_bits, &mut self.rng);
                self.create_cd(token, stored, false)
            }
        }
    }

    /// Dummy creation payload for modes C/D: a random identifier pushed
    /// through the identical pipeline as a real one.
    fn dummy_entry(
        &mut self,
        keys: &IndexKeySet,
        params: BloomParams,
    ) -> Result<([u8; TAG_LEN], BloomFilter), CoreError> {
        let qid = self.dummy_qid();
        let token = self.epoch_token(&qid);
        let filter =
            build_stored_filter(keys, &token, params.m, params.blind_bits, &mut self.rng);
        Ok((token, filter))
    }

    /// Dummy creation payload for mode B: random item, unblinded filter.
    fn dummy_item(
        &mut self,
        keys: &IndexKeySet,
        params: BloomParams,
    ) -> Result<(Vec<u8>, BloomFilter), CoreError> {
        let item = self.dummy_qid();
        let token = self.epoch_token(&item);
        let mut filter = BloomFilter::empty(params.m);
        for pos in full_trapdoor(keys, &token, params.m).positions {
            filter.set(pos);
        }
        Ok((item, filter))
    }

    fn dummy_qid(&mut self) -> Vec<u8> {
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let mut qid = nonce.to_vec();
        qid.extend_from_slice(b"dummy-nonce");
        qid
    }
}
