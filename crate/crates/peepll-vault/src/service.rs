//! Per-connection request handling, shared by the TCP daemon and the
//! in-process harness transport.

use std::sync::Arc;

use peepll_core::crypto::{Pseudonym, TAG_LEN};
use peepll_core::protocol::{
    decode, Body, CreateBody, ErrorCode, LookupReply, LookupToken, Message, Mode,
};
use peepll_core::transport::{duplex, send_msg, Channel, InProcChannel};
use peepll_core::CoreError;

use crate::Vault;

/// Pending OT state: the match set frozen by the last mode-D lookup on this
/// connection, valid only within the epoch it was produced in.
struct PendingOt {
    epoch: u64,
    matched: Vec<([u8; TAG_LEN], Pseudonym)>,
}

fn error_reply(vault: &Vault, err: &CoreError) -> Message {
    let code = match err {
        CoreError::Capacity => ErrorCode::Capacity,
        CoreError::Malformed(_) => ErrorCode::Malformed,
        _ => ErrorCode::Protocol,
    };
    Message::error(vault.mode(), vault.current_epoch(), code, err.to_string())
}

/// Serves one Depositor connection until the peer hangs up.
///
/// The connection greeting is an EpochNotice carrying the current epoch and
/// filter parameters, plus the OT public key in mode D. A rollover observed
/// between requests is announced with a fresh EpochNotice ahead of the next
/// response.
pub fn serve_channel(vault: Arc<Vault>, chan: &mut dyn Channel) {
    let mode = vault.mode();
    let notice = |epoch| {
        Message::new(
            mode,
            epoch,
            Body::EpochNotice {
                params: vault.param_summary(),
            },
        )
    };

    let mut announced = vault.current_epoch();
    if send_msg(chan, &notice(announced)).is_err() {
        return;
    }
    if let Some(key) = vault.ot_public_key() {
        if send_msg(chan, &Message::new(mode, announced, Body::OtPublicKey { key })).is_err() {
            return;
        }
    }

    let mut pending_ot: Option<PendingOt> = None;
    loop {
        let line = match chan.recv_line() {
            Ok(Some(line)) => line,
            Ok(None) | Err(_) => return,
        };
        let reply = match decode(&line) {
            Ok(msg) if msg.mode != mode => Message::error(
                mode,
                vault.current_epoch(),
                ErrorCode::Protocol,
                format!("vault runs mode {}", mode.as_str()),
            ),
            Ok(msg) => {
                vault.observe_epoch(msg.epoch);
                handle_request(&vault, msg, &mut pending_ot)
            }
            Err(err) => Message::error(
                mode,
                vault.current_epoch(),
                ErrorCode::Malformed,
                err.to_string(),
            ),
        };
        let current = vault.current_epoch();
        if current > announced {
            announced = current;
            if send_msg(chan, &notice(current)).is_err() {
                return;
            }
        }
        if send_msg(chan, &reply).is_err() {
            return;
        }
    }
}

fn handle_request(vault: &Vault, msg: Message, pending_ot: &mut Option<PendingOt>) -> Message {
    let mode = vault.mode();
    let epoch = vault.current_epoch();
    let outcome = match msg.body {
        Body::LookupRequest(LookupToken::Tag(token)) => vault
            .lookup_or_create_a(&token)
            .map(|pseudonym| Body::LookupResponse(LookupReply::Tag { token, pseudonym })),
        Body::LookupRequest(LookupToken::Filter(filter)) => vault
            .search_b(&filter)
            .map(|items| Body::LookupResponse(LookupReply::Items(items))),
        Body::LookupRequest(LookupToken::Trapdoor(positions)) => {
            vault.search_cd(&positions).map(|matched| {
                if mode == Mode::D {
                    let count = matched.len() as u64;
                    *pending_ot = Some(PendingOt { epoch, matched });
                    Body::LookupResponse(LookupReply::Count(count))
                } else {
                    Body::LookupResponse(LookupReply::Hmacs(matched))
                }
            })
        }
        Body::CreateRequest(CreateBody::Item { item, filter }) => vault
            .update_mapping_b(&item, filter)
            .map(|pseudonym| Body::CreateResponse { pseudonym }),
        Body::CreateRequest(CreateBody::Hmac { hmac, filter }) => vault
            .update_mapping_cd(&hmac, filter)
            .map(|pseudonym| Body::CreateResponse { pseudonym }),
        Body::OtTransferRequest { point } => {
            // a rollover voids the frozen match set; the transfer then
            // reports an empty set and the client follows the miss path
            let matched = match pending_ot.as_ref() {
                Some(p) if p.epoch == epoch => p.matched.clone(),
                _ => Vec::new(),
            };
            vault
                .ot_respond(&matched, &point)
                .map(|set| Body::OtTransferResponse { set })
        }
        other => Err(CoreError::Protocol(format!(
            "unexpected client message {}",
            other.type_name()
        ))),
    };
    match outcome {
        Ok(body) => Message::new(mode, epoch, body),
        Err(err) => error_reply(vault, &err),
    }
}

/// Connects an in-process client channel to a freshly spawned serving
/// thread. Used by tests and the simulation harness.
pub fn spawn_inproc(vault: Arc<Vault>) -> InProcChannel {
    let (client, mut server) = duplex();
    std::thread::spawn(move || serve_channel(vault, &mut server));
    client
}
