//! Simulation and measurement rig: spins up an in-process PVault with N
//! Depositor workers, reproduces the false-positive match curve, and runs
//! the insider dictionary attack in both directions.

mod attack;
mod fig4;
mod sim;

pub use attack::{dictionary_attack, AttackReport};
pub use fig4::{reproduce_fig4, stats_to_csv, Fig4Options, MatchStats, DEFAULT_FP_TARGETS};
pub use sim::{run_sim, QidDistribution, SimConfig, SimReport};
