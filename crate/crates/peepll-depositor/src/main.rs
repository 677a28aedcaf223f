//! Depositor CLI: reads JSON-lines event records, swaps configured QID
//! fields for pseudonyms, writes the rewritten stream.

use std::collections::VecDeque;
use std::io::{BufRead, BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use serde_json::Value;

use peepll_core::crypto::MasterSecret;
use peepll_core::transport::TcpChannel;
use peepll_core::CoreError;
use peepll_depositor::{DepositorConfig, Session};

/// Records held while the PVault is unreachable; past this the pipeline
/// stalls rather than drop data.
const RETRY_BUFFER: usize = 10_000;
const RECONNECT_ATTEMPTS: u32 = 5;

#[derive(Parser, Debug)]
#[command(name = "depositor", about = "Event record pseudonymisation client")]
struct Args {
    /// Depositor configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Input JSONL file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    r#in: String,
    /// Output JSONL file, or `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

fn open_session(cfg: &DepositorConfig) -> Result<Session, CoreError> {
    let master = MasterSecret::load(&cfg.master_secret)?;
    let chan = TcpChannel::connect(&cfg.pvault)?;
    let mut session = Session::connect(
        Box::new(chan),
        master,
        cfg.mode()?,
        cfg.bloom_params()?,
        cfg.group_id()?,
        cfg.seed,
    )?;
    // anytrust: enforce the epoch limit from the local clock as well
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    if cfg.epoch_seconds > 0 {
        let local_epoch = unix / cfg.epoch_seconds;
        if local_epoch > session.epoch() {
            session.set_epoch(local_epoch);
        }
    }
    Ok(session)
}

fn reconnect(cfg: &DepositorConfig) -> Result<Session, CoreError> {
    let mut delay = Duration::from_millis(200);
    let mut last_err = None;
    for _ in 0..RECONNECT_ATTEMPTS {
        match open_session(cfg) {
            Ok(session) => return Ok(session),
            Err(err) => {
                last_err = Some(err);
                std::thread::sleep(delay);
                delay = (delay * 2).min(Duration::from_secs(5));
            }
        }
    }
    Err(last_err.unwrap_or(CoreError::ChannelClosed))
}

fn main() {
    let args = Args::parse();
    let cfg = match DepositorConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("depositor: {err}");
            std::process::exit(1);
        }
    };
    let mut session = match open_session(&cfg) {
        Ok(s) => s,
        Err(err) => {
            eprintln!("depositor: connect failed: {err}");
            std::process::exit(1);
        }
    };

    let stdin = std::io::stdin();
    let reader: Box<dyn BufRead> = if args.r#in == "-" {
        Box::new(stdin.lock())
    } else {
        match std::fs::File::open(&args.r#in) {
            Ok(f) => Box::new(std::io::BufReader::new(f)),
            Err(err) => {
                eprintln!("depositor: cannot open {}: {err}", args.r#in);
                std::process::exit(1);
            }
        }
    };
    let stdout = std::io::stdout();
    let mut writer: Box<dyn Write> = if args.out == "-" {
        Box::new(BufWriter::new(stdout.lock()))
    } else {
        match std::fs::File::create(&args.out) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(err) => {
                eprintln!("depositor: cannot create {}: {err}", args.out);
                std::process::exit(1);
            }
        }
    };

    let mut pending: VecDeque<Value> = VecDeque::new();
    let mut failures = 0u64;
    let mut processed = 0u64;

    let mut lines = reader.lines();
    'outer: loop {
        // drain buffered records first, then pull fresh input
        let record = if let Some(record) = pending.pop_front() {
            record
        } else {
            match lines.next() {
                Some(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<Value>(&line) {
                        Ok(v) => v,
                        Err(err) => {
                            eprintln!("depositor: skipping unparsable record: {err}");
                            failures += 1;
                            continue;
                        }
                    }
                }
                Some(Err(err)) => {
                    eprintln!("depositor: input error: {err}");
                    failures += 1;
                    break;
                }
                None => break,
            }
        };

        // anytrust: enforce the epoch limit locally on every record
        if cfg.epoch_seconds > 0 {
            let unix = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let local_epoch = unix / cfg.epoch_seconds;
            if local_epoch > session.epoch() {
                session.set_epoch(local_epoch);
            }
        }

        let mut attempt = record;
        loop {
            match session.pseudonymise(&mut attempt, &cfg.qid_paths) {
                Ok(_) => {
                    processed += 1;
                    let line = serde_json::to_string(&attempt).expect("records are json");
                    if writeln!(writer, "{line}").is_err() {
                        eprintln!("depositor: output closed");
                        std::process::exit(1);
                    }
                    break;
                }
                Err(CoreError::ChannelClosed) | Err(CoreError::Io(_)) => {
                    // transport trouble: buffer and reconnect
                    if pending.len() >= RETRY_BUFFER {
                        eprintln!("depositor: retry buffer full, giving up");
                        failures += 1;
                        break 'outer;
                    }
                    pending.push_front(attempt);
                    match reconnect(&cfg) {
                        Ok(fresh) => {
                            session = fresh;
                            attempt = pending.pop_front().unwrap();
                        }
                        Err(err) => {
                            eprintln!("depositor: reconnect failed: {err}");
                            failures += 1;
                            break 'outer;
                        }
                    }
                }
                Err(err) => {
                    // per-record error (capacity, protocol): never emit the
                    // record unpseudonymised
                    eprintln!("depositor: record failed: {err}");
                    failures += 1;
                    break;
                }
            }
        }
    }

    let _ = writer.flush();
    eprintln!("depositor: {processed} records processed, {failures} failed");
    if failures > 0 {
        std::process::exit(1);
    }
}
