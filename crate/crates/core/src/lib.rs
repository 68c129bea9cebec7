//! Downlink RBG scheduling simulator: a TTI-level multi-cell LTE model with
//! proportional fair, channel-and-QoS-aware and actor-critic schedulers.

pub mod a2c;
pub mod channel;
pub mod config;
pub mod domain;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod sched;
pub mod traffic;

pub use config::{SchedulerKind, ScenarioConfig};
pub use engine::{run, run_with, RunOutput, SchedulerImpl, Simulation};
pub use error::{Error, Result};

/// The generator behind every random stream of a run.
pub type SimRng = rand_chacha::ChaCha8Rng;
