//! Simulation CLI: workload runs, the false-positive match curve, and the
//! insider dictionary attack.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use peepll_core::protocol::Mode;
use peepll_sim::{
    dictionary_attack, reproduce_fig4, run_sim, stats_to_csv, Fig4Options, SimConfig,
};

#[derive(Parser, Debug)]
#[command(name = "peepll-sim", about = "PEEPLL simulation and measurement rig")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configured workload against an in-process vault.
    Run {
        /// SimConfig file (TOML, or JSON with a .json extension).
        #[arg(long)]
        config: PathBuf,
        /// Write the deterministic summary CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the average-matching-set curve.
    Fig4 {
        #[arg(long, default_value_t = 100)]
        prefill: u32,
        #[arg(long, default_value_t = 50)]
        trials: u32,
        #[arg(long, default_value_t = 13)]
        seed: u64,
        /// Override the blinding policy with a fixed bit count.
        #[arg(long)]
        blind_bits: Option<u32>,
        /// Query prefilled identifiers instead of fresh ones.
        #[arg(long, default_value_t = false)]
        prefilled: bool,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the insider dictionary attack.
    Attack {
        /// C exposes foreign deposits; D seals them.
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        universe: u32,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() {
    let args = Args::parse();
    let result = match args.command {
        Command::Run { config, out } => (|| {
            let cfg = SimConfig::load(&config)?;
            let report = run_sim(&cfg)?;
            eprintln!("{}", report.human_summary());
            let csv = report.to_csv();
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            if report.consistency_violations > 0 {
                return Err(peepll_core::CoreError::Protocol(
                    "global pseudonym consistency violated".into(),
                ));
            }
            Ok(())
        })(),
        Command::Fig4 {
            prefill,
            trials,
            seed,
            blind_bits,
            prefilled,
            out,
        } => (|| {
            let opts = Fig4Options {
                prefill,
                trials,
                seed,
                blind_bits,
                query_prefilled: prefilled,
                ..Fig4Options::default()
            };
            let stats = reproduce_fig4(&opts)?;
            let csv = stats_to_csv(&stats);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        })(),
        Command::Attack {
            mode,
            universe,
            seed,
        } => (|| {
            let report = dictionary_attack(mode, universe, seed)?;
            println!("{}", report.human_summary());
            Ok(())
        })(),
    };
    if let Err(err) = result {
        eprintln!("peepll-sim: {err}");
        std::process::exit(1);
    }
}
