//! Depositor configuration file schema (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use peepll_core::group::GroupId;
use peepll_core::protocol::Mode;
use peepll_core::secure_index::BloomParams;
use peepll_core::CoreError;

/// Filter parameter mirror. Must agree with the PVault's derivation; the
/// handshake verifies and refuses to run on mismatch.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BloomSection {
    pub fp: f64,
    /// Observed event rate (events per time unit).
    pub r_events: f64,
    /// Retention period in the same time unit.
    pub p_retention: f64,
    /// Identifiers per event.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub blind_bits: u32,
}

fn default_c() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepositorConfig {
    pub master_secret: PathBuf,
    pub mode: String,
    pub pvault: String,
    pub qid_paths: Vec<String>,
    #[serde(default)]
    pub epoch_seconds: u64,
    #[serde(default = "default_group")]
    pub group: String,
    /// Seeds the session RNG (trapdoor subsets, blinding, dummies). Omit in
    /// production; deterministic runs are for testing.
    #[serde(default)]
    pub seed: Option<u64>,
    pub bloom: Option<BloomSection>,
}

fn default_group() -> String {
    "production".into()
}

impl DepositorConfig {
    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("config {}: {e}", path.display())))?;
        let cfg: DepositorConfig =
            toml::from_str(&text).map_err(|e| CoreError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CoreError> {
        let mode = self.mode()?;
        if mode != Mode::A && self.bloom.is_none() {
            return Err(CoreError::Config(format!(
                "mode {} requires a [bloom] section",
                mode.as_str()
            )));
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<Mode, CoreError> {
        self.mode.parse()
    }

    pub fn group_id(&self) -> Result<GroupId, CoreError> {
        self.group.parse()
    }

    pub fn bloom_params(&self) -> Result<Option<BloomParams>, CoreError> {
        match &self.bloom {
            None => Ok(None),
            Some(b) => Ok(Some(BloomParams::derive_from_rates(
                b.fp,
                b.r_events,
                b.p_retention,
                b.c,
                b.blind_bits,
            )?)),
        }
    }
}
