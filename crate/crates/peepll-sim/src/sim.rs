//! End-to-end simulation: an in-process PVault serving concurrent Depositor
//! workers over the real wire protocol.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Zipf};
use serde::Deserialize;

use peepll_core::crypto::{MasterSecret, Pseudonym};
use peepll_core::group::GroupId;
use peepll_core::protocol::Mode;
use peepll_core::secure_index::BloomParams;
use peepll_core::CoreError;
use peepll_depositor::Session;
use peepll_vault::{spawn_inproc, Vault, VaultConfig};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum QidDistribution {
    /// Uniform over the identifier universe.
    Uniform,
    /// Zipf with exponent `s`.
    Zipf { s: f64 },
    /// Every worker visits the whole universe once, in its own shuffled
    /// order. Maximises cross-worker contention on shared identifiers.
    Sweep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub mode: String,
    #[serde(default = "default_depositors")]
    pub num_depositors: u32,
    /// Events per worker (ignored by the sweep distribution).
    #[serde(default = "default_events")]
    pub num_events: u32,
    #[serde(default = "default_universe")]
    pub qid_universe: u32,
    #[serde(default = "default_distribution")]
    pub distribution: QidDistribution,
    #[serde(default = "default_fp")]
    pub fp: f64,
    #[serde(default)]
    pub blind_bits: u32,
    /// Identifiers deposited before the measured run starts.
    #[serde(default)]
    pub prefill: u32,
    #[serde(default)]
    pub budget: u64,
    /// Seeds the workload (event streams, trapdoor subsets, dummies).
    #[serde(default)]
    pub seed: u64,
    /// Seeds the vault's pseudonym RNG separately, so the same workload can
    /// be replayed against fresh randomness. Defaults to `seed`.
    #[serde(default)]
    pub vault_seed: Option<u64>,
    /// Drive the workers in deterministic round-robin order instead of free
    /// threads. Free-running workers race on duplicate creations, which
    /// makes mapping-size counters schedule-dependent; lockstep runs are
    /// byte-reproducible.
    #[serde(default)]
    pub lockstep: bool,
}

fn default_depositors() -> u32 {
    3
}
fn default_events() -> u32 {
    1000
}
fn default_universe() -> u32 {
    100
}
fn default_distribution() -> QidDistribution {
    QidDistribution::Uniform
}
fn default_fp() -> f64 {
    0.01
}

impl SimConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("sim config {}: {e}", path.display())))?;
        let cfg: SimConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CoreError::Config(format!("sim config: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| CoreError::Config(format!("sim config: {e}")))?
        };
        Ok(cfg)
    }

    pub fn mode(&self) -> Result<Mode, CoreError> {
        self.mode.parse()
    }
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub mode: Mode,
    pub depositors: u32,
    pub events: u64,
    pub lookups: u64,
    pub hits: u64,
    pub creates_real: u64,
    pub creates_dummy: u64,
    pub messages_sent: u64,
    pub mapping_size: usize,
    pub evictions: u64,
    pub rollovers: u64,
    /// Distinct (identifier, pseudonym) pairs beyond one per identifier.
    /// Always zero with budgets disabled.
    pub consistency_violations: u64,
    pub elapsed_secs: f64,
    /// Every (identifier index, pseudonym) observation, for differential
    /// runs; not part of the CSV.
    pub observations: Vec<(u32, Pseudonym)>,
}

impl SimReport {
    /// Deterministic summary for seeded runs: excludes timing, and for
    /// modes with spurious matching excludes schedule-dependent counters.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("mode,depositors,events,lookups,creates,mapping_size,evictions,rollovers,violations\n");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            self.mode.as_str(),
            self.depositors,
            self.events,
            self.lookups,
            self.creates_real + self.creates_dummy,
            self.mapping_size,
            self.evictions,
            self.rollovers,
            self.consistency_violations,
        ));
        out
    }

    pub fn human_summary(&self) -> String {
        format!(
            "mode {}: {} events via {} depositors; {} lookups ({} hits), \
             {} real + {} dummy creations, mapping {} entries, {} evictions, \
             {} rollovers, {} consistency violations\n\
             informational: {:.2}s elapsed, {:.0} lookups/s",
            self.mode.as_str(),
            self.events,
            self.depositors,
            self.lookups,
            self.hits,
            self.creates_real,
            self.creates_dummy,
            self.mapping_size,
            self.evictions,
            self.rollovers,
            self.consistency_violations,
            self.elapsed_secs,
            self.lookups as f64 / self.elapsed_secs.max(1e-9),
        )
    }
}

fn qid_string(index: u32) -> String {
    format!("10.{}.{}.{}", index >> 16 & 0xff, index >> 8 & 0xff, index & 0xff)
}

fn accumulate(
    totals: &mut peepll_depositor::SessionCounters,
    c: peepll_depositor::SessionCounters,
) {
    totals.lookups += c.lookups;
    totals.hits += c.hits;
    totals.creates_real += c.creates_real;
    totals.creates_dummy += c.creates_dummy;
    totals.messages_sent += c.messages_sent;
    totals.ot_transfers += c.ot_transfers;
}

/// The per-worker identifier stream, fully determined by the sim seed.
fn worker_events(cfg: &SimConfig, worker: u32) -> Result<Vec<u32>, CoreError> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ ((worker as u64) << 32));
    let universe = cfg.qid_universe.max(1);
    Ok(match cfg.distribution {
        QidDistribution::Uniform => (0..cfg.num_events)
            .map(|_| rng.gen_range(0..universe))
            .collect(),
        QidDistribution::Zipf { s } => {
            let zipf = Zipf::new(universe as u64, s)
                .map_err(|e| CoreError::Config(format!("zipf: {e}")))?;
            (0..cfg.num_events)
                .map(|_| zipf.sample(&mut rng) as u32 - 1)
                .collect()
        }
        QidDistribution::Sweep => {
            let mut all: Vec<u32> = (0..universe).collect();
            use rand::seq::SliceRandom;
            all.shuffle(&mut rng);
            all
        }
    })
}

/// Runs the configured workload and checks Global Pseudonym Consistency on
/// the way out (budgets deliberately rotate pseudonyms, so violations are
/// only counted against runs with budgets disabled).
pub fn run_sim(cfg: &SimConfig) -> Result<SimReport, CoreError> {
    let mode = cfg.mode()?;
    let master = MasterSecret::generate(&mut ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed));

    let mut vault_cfg = VaultConfig::new(mode);
    vault_cfg.fp = cfg.fp;
    vault_cfg.bloom_capacity = 1;
    vault_cfg.blind_bits = cfg.blind_bits;
    vault_cfg.budget = cfg.budget;
    vault_cfg.group = GroupId::Test;
    vault_cfg.seed = Some(cfg.vault_seed.unwrap_or(cfg.seed));
    let vault = Arc::new(Vault::new(vault_cfg)?);

    let params = match mode {
        Mode::A => None,
        _ => Some(BloomParams::derive(cfg.fp, 1, cfg.blind_bits)?),
    };

    let connect = |seed: u64| -> Result<Session, CoreError> {
        Session::connect(
            Box::new(spawn_inproc(Arc::clone(&vault))),
            master.clone(),
            mode,
            params,
            GroupId::Test,
            Some(seed),
        )
    };

    if cfg.prefill > 0 {
        let mut warm = connect(cfg.seed ^ 0xf111)?;
        for i in 0..cfg.prefill {
            warm.lookup(qid_string(i).as_bytes())?;
        }
    }

    let event_streams: Vec<Vec<u32>> = (0..cfg.num_depositors)
        .map(|worker| worker_events(cfg, worker))
        .collect::<Result<_, _>>()?;

    let started = Instant::now();
    let mut observations: Vec<(u32, Pseudonym)> = Vec::new();
    let mut totals = peepll_depositor::SessionCounters::default();

    if cfg.lockstep {
        let mut sessions: Vec<Session> = (0..cfg.num_depositors)
            .map(|w| connect(cfg.seed.wrapping_add(w as u64 + 1)))
            .collect::<Result<_, _>>()?;
        let rounds = event_streams.iter().map(Vec::len).max().unwrap_or(0);
        for round in 0..rounds {
            for (worker, stream) in event_streams.iter().enumerate() {
                if let Some(&index) = stream.get(round) {
                    let pseudonym = sessions[worker].lookup(qid_string(index).as_bytes())?;
                    observations.push((index, pseudonym));
                }
            }
        }
        for session in &sessions {
            accumulate(&mut totals, session.counters());
        }
    } else {
        let mut handles = Vec::new();
        for (worker, stream) in event_streams.into_iter().enumerate() {
            let mut session = connect(cfg.seed.wrapping_add(worker as u64 + 1))?;
            handles.push(std::thread::spawn(move || -> Result<_, CoreError> {
                let mut observed = Vec::with_capacity(stream.len());
                for index in stream {
                    let pseudonym = session.lookup(qid_string(index).as_bytes())?;
                    observed.push((index, pseudonym));
                }
                Ok((observed, session.counters()))
            }));
        }
        for handle in handles {
            let (observed, counters) = handle.join().expect("worker panicked")?;
            observations.extend(observed);
            accumulate(&mut totals, counters);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let (lookups, hits, creates_real, creates_dummy, messages_sent) = (
        totals.lookups,
        totals.hits,
        totals.creates_real,
        totals.creates_dummy,
        totals.messages_sent,
    );

    let mut by_qid: HashMap<u32, Vec<Pseudonym>> = HashMap::new();
    for (index, pseudonym) in &observations {
        let seen = by_qid.entry(*index).or_default();
        if !seen.contains(pseudonym) {
            seen.push(*pseudonym);
        }
    }
    let consistency_violations = if cfg.budget == 0 {
        by_qid.values().map(|v| v.len() as u64 - 1).sum()
    } else {
        0
    };

    let metrics = vault.metrics();
    Ok(SimReport {
        mode,
        depositors: cfg.num_depositors,
        events: observations.len() as u64,
        lookups,
        hits,
        creates_real,
        creates_dummy,
        messages_sent,
        mapping_size: metrics.mapping_size,
        evictions: metrics.evictions,
        rollovers: metrics.rollovers,
        consistency_violations,
        elapsed_secs: elapsed,
        observations,
    })
}
