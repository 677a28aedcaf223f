//! Insider dictionary attack: a Depositor holding the shared master secret
//! enumerates the identifier universe and matches candidate tokens against
//! captured response material. Demonstrates that secure-index responses
//! expose foreign deposits (mode C) while OT-sealed responses do not
//! (mode D).

use std::collections::HashSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use peepll_core::crypto::{EpochTag, IndexKeySet, MasterSecret};
use peepll_core::group::GroupId;
use peepll_core::ot::try_decrypt;
use peepll_core::protocol::{decode, Body, LookupReply, Mode};
use peepll_core::secure_index::{blind_bits_for_load, build_stored_filter, BloomParams};
use peepll_core::transport::CaptureLog;
use peepll_core::CoreError;
use peepll_depositor::Session;
use peepll_vault::{spawn_inproc, Vault, VaultConfig};

const ATTACK_FP: f64 = 0.01;
/// Lookups the attacker performs. Mode C needs enough traffic that every
/// foreign deposit shows up in at least one response (at the ~0.12 match
/// rate, 300 lookups leave even low-popcount stragglers no realistic cover).
/// Mode D has nothing coverage-dependent to recover, so fewer suffice.
const ATTACK_LOOKUPS_C: u32 = 300;
const ATTACK_LOOKUPS_D: u32 = 40;
/// Ciphertext sample for the per-candidate decryption sweep; keeps the
/// enumeration near-linear while still attempting authenticated decryption
/// at scale.
const DECRYPT_SWEEP_SAMPLE: usize = 1000;

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub mode: Mode,
    pub universe: u32,
    /// Foreign deposits present in the vault before the attack.
    pub deposited: u32,
    /// Wire lines captured during the attacker's session.
    pub captured_lines: usize,
    /// Foreign identifiers recovered by dictionary enumeration.
    pub recovered: u32,
    pub recovery_rate: f64,
}

impl AttackReport {
    pub fn human_summary(&self) -> String {
        format!(
            "mode {}: universe {}, {} foreign deposits, {} captured lines, \
             {} recovered ({:.1}%)",
            self.mode.as_str(),
            self.universe,
            self.deposited,
            self.captured_lines,
            self.recovered,
            self.recovery_rate * 100.0
        )
    }
}

/// Runs the attack for mode C or D. The universe is deposited by foreign
/// Depositors, the attacker performs ordinary lookups for fresh identifiers
/// and then enumerates the universe against its captured traffic.
pub fn dictionary_attack(mode: Mode, universe: u32, seed: u64) -> Result<AttackReport, CoreError> {
    if !matches!(mode, Mode::C | Mode::D) {
        return Err(CoreError::Config(
            "dictionary attack applies to modes C and D".into(),
        ));
    }
    let master = MasterSecret::generate(&mut ChaCha20Rng::seed_from_u64(seed ^ 0xd1c7));
    let base = BloomParams::derive(ATTACK_FP, 1, 0)?;
    let blind_bits = blind_bits_for_load(base.m, base.k_star, 0.72);
    let params = BloomParams::derive(ATTACK_FP, 1, blind_bits)?;

    let mut cfg = VaultConfig::new(mode);
    cfg.fp = ATTACK_FP;
    cfg.bloom_capacity = 1;
    cfg.blind_bits = blind_bits;
    cfg.group = GroupId::Test;
    cfg.seed = Some(seed);
    let vault = Arc::new(Vault::new(cfg)?);

    // Foreign deposits: one entry per universe identifier, built exactly as
    // other Depositors would build them.
    let keys = IndexKeySet::derive(&master, params.k_star)?;
    let epoch = EpochTag::derive(&master, 0);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xf0e1);
    let mut foreign_tokens = HashSet::new();
    for i in 0..universe {
        let token = epoch.token(qid(i).as_bytes());
        let filter = build_stored_filter(&keys, &token, params.m, blind_bits, &mut rng);
        vault.update_mapping_cd(&token, filter)?;
        foreign_tokens.insert(token);
    }

    // The attacker is an ordinary Depositor; its whole session is captured.
    let capture = CaptureLog::new();
    let chan = spawn_inproc(Arc::clone(&vault)).with_capture(capture.clone());
    let mut attacker = Session::connect(
        Box::new(chan),
        master.clone(),
        mode,
        Some(params),
        GroupId::Test,
        Some(seed ^ 0xa77a),
    )?;
    let lookups = match mode {
        Mode::C => ATTACK_LOOKUPS_C,
        _ => ATTACK_LOOKUPS_D,
    };
    for i in 0..lookups {
        attacker.lookup(format!("attacker-{i}").as_bytes())?;
    }

    // Harvest response material from the capture.
    let mut seen_hmacs: HashSet<[u8; 32]> = HashSet::new();
    let mut seen_ot_indexes: HashSet<[u8; 32]> = HashSet::new();
    let mut ciphertexts: Vec<Vec<u8>> = Vec::new();
    let lines = capture.lines();
    for line in &lines {
        let Ok(msg) = decode(line) else { continue };
        match msg.body {
            Body::LookupResponse(LookupReply::Hmacs(items)) => {
                for (hmac, _) in items {
                    seen_hmacs.insert(hmac);
                }
            }
            Body::OtTransferResponse { set } => {
                for entry in set.entries {
                    seen_ot_indexes.insert(entry.idx);
                    ciphertexts.push(entry.ct);
                }
            }
            _ => {}
        }
    }

    // Dictionary enumeration: recompute every candidate token and test it
    // against everything the wire exposed. Set probes run against the full
    // capture; decryption attempts run against a fixed ciphertext sample.
    let sweep = &ciphertexts[..ciphertexts.len().min(DECRYPT_SWEEP_SAMPLE)];
    let mut recovered = 0;
    for i in 0..universe {
        let candidate = epoch.token(qid(i).as_bytes());
        let mut hit = seen_hmacs.contains(&candidate);
        if !hit && !seen_ot_indexes.is_empty() {
            hit = seen_ot_indexes.contains(&candidate)
                || sweep.iter().any(|ct| try_decrypt(&candidate, ct).is_some());
        }
        if hit {
            recovered += 1;
        }
    }

    Ok(AttackReport {
        mode,
        universe,
        deposited: universe,
        captured_lines: lines.len(),
        recovered,
        recovery_rate: recovered as f64 / universe.max(1) as f64,
    })
}

fn qid(i: u32) -> String {
    format!("203.0.{}.{}", i >> 8 & 0xff, i & 0xff)
}
