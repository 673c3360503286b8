//! Discrete-time simulator and optimization library for conformal Lyapunov
//! optimization (CLO) in multi-hop edge-inference networks.
//!
//! Edge devices generate inference tasks (data units) that are forwarded over
//! fading wireless links and decided at servers of varying model quality. A
//! central controller solves a drift-plus-penalty scheduling problem each
//! slot, while an online conformal risk-control loop adjusts per-user
//! decision thresholds at frame boundaries so that the long-run reliability
//! loss (e.g. false-negative rate) is pinned to a target on *every*
//! realization, not just on average. Classical Lyapunov-optimization
//! baselines with virtual queues (long-term average and outage-probability
//! reliability control) are included for comparison.
//!
//! Module map:
//! - [`net`]: static network description and graph constants
//! - [`channel`]: fading, Shannon capacity, minimal-power transmission
//! - [`tasks`]: synthetic segmentation tasks, prediction sets, losses
//! - [`queueing`]: per-(node, user) DU FIFOs and the slot transition
//! - [`optimizer`]: the per-slot combinatorial scheduling problem
//! - [`crc`]: frame feedback, threshold updates, reliability certificates
//! - [`lo`]: virtual-queue baselines and surrogate loss tables
//! - [`config`]: scenario files (structured text, schema-versioned)
//! - [`harness`]: scenario drivers, metrics, sweeps, certificate checks

pub mod channel;
pub mod config;
pub mod crc;
pub mod harness;
pub mod lo;
pub mod net;
pub mod optimizer;
pub mod queueing;
pub mod rng;
pub mod tasks;

pub use config::{Policy, ScenarioConfig};
pub use harness::{run_scenario, RunOutput};
pub use net::Network;
