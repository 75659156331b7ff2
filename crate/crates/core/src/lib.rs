//! Latency-constrained downlink scheduling for massive MIMO cells.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod latency;
pub mod metrics;
pub mod policy;
pub mod power;
pub mod scenario;
pub mod sim;
pub mod traffic;
pub mod validate;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_sweep, ExperimentOutput, RunOptions, SweepVar};
pub use metrics::{aggregate, Ccdf, Estimate, MetricsSpec, PolicyMetrics, RealizationSummary};
pub use policy::{Cell, PolicyConfig, PolicyKind, SlotDecision};
pub use scenario::{generate_scenario, Scenario};
pub use sim::{run_realization, SimOptions, SlotRecord, Trace};
pub use traffic::{UeDynamicState, UeProfile};
