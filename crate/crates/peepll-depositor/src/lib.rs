//! Depositor client: extracts configured quasi-identifier fields from event
//! records, obtains pseudonyms from the PVault under the configured privacy
//! mechanism, and rewrites the records in place.

mod config;
mod records;
mod session;

pub use config::{BloomSection, DepositorConfig};
pub use records::{extract_path, replace_path};
pub use session::{Session, SessionCounters};
