//! PVault daemon: listens for Depositor connections over TCP and serves the
//! pseudonym mapping.

use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use peepll_core::group::GroupId;
use peepll_core::protocol::Mode;
use peepll_core::transport::TcpChannel;
use peepll_vault::{serve_channel, Vault, VaultConfig};

#[derive(Parser, Debug)]
#[command(name = "pvault", about = "Pseudonym Vault daemon")]
struct Args {
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:7474")]
    listen: String,
    /// Privacy mechanism: A (HMAC), B (blinded Bloom), C (secure index),
    /// D (secure index + OT).
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    /// Target false-positive rate for modes B/C/D.
    #[arg(long, default_value_t = 0.01)]
    fp: f64,
    /// Blinding bits expected in stored filters.
    #[arg(long, default_value_t = 0)]
    blind_bits: u32,
    /// Maximum mapping entries; also sizes the filters.
    #[arg(long, default_value_t = 100_000)]
    capacity: usize,
    /// Epoch length in seconds; 0 disables epochs.
    #[arg(long, default_value_t = 0)]
    epoch_seconds: u64,
    /// Budget limit B; 0 disables budgets.
    #[arg(long, default_value_t = 0)]
    budget: u64,
    /// Mapping snapshot file.
    #[arg(long)]
    snapshot_path: Option<PathBuf>,
    /// Group profile for mode D.
    #[arg(long, default_value = "production", value_parser = parse_group)]
    group: GroupId,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_group(s: &str) -> Result<GroupId, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() {
    let args = Args::parse();
    let mut cfg = VaultConfig::new(args.mode);
    cfg.fp = args.fp;
    cfg.bloom_capacity = args.capacity as u64;
    cfg.blind_bits = args.blind_bits;
    cfg.capacity = args.capacity;
    cfg.budget = args.budget;
    cfg.epoch_seconds = args.epoch_seconds;
    cfg.snapshot_path = args.snapshot_path;
    cfg.group = args.group;

    let vault = match Vault::new(cfg) {
        Ok(v) => Arc::new(v),
        Err(err) => {
            eprintln!("pvault: startup failed: {err}");
            std::process::exit(1);
        }
    };

    // adopt the wall-clock epoch before accepting connections
    let clock_epoch = vault.clock_epoch();
    vault.observe_epoch(clock_epoch);

    if args.epoch_seconds > 0 {
        let vault = Arc::clone(&vault);
        std::thread::spawn(move || loop {
            std::thread::sleep(std::time::Duration::from_millis(250));
            vault.observe_epoch(vault.clock_epoch());
        });
    }

    let listener = match TcpListener::bind(&args.listen) {
        Ok(l) => l,
        Err(err) => {
            eprintln!("pvault: cannot bind {}: {err}", args.listen);
            std::process::exit(1);
        }
    };
    let local = listener
        .local_addr()
        .map(|a| a.to_string())
        .unwrap_or(args.listen.clone());
    eprintln!("pvault: mode {} listening on {local}", vault.mode().as_str());

    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                let vault = Arc::clone(&vault);
                std::thread::spawn(move || match TcpChannel::new(stream) {
                    Ok(mut chan) => serve_channel(vault, &mut chan),
                    Err(err) => eprintln!("pvault: connection setup failed: {err}"),
                });
            }
            Err(err) => eprintln!("pvault: accept failed: {err}"),
        }
    }
}
