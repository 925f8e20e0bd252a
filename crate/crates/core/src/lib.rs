//! Saturated IEEE 802.11 DCF over a chain of platoon backbone vehicles,
//! and a particle swarm that tunes each vehicle's minimum contention
//! window to lower and balance one-hop delay.

pub mod error;
pub mod mac;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod reference;
pub mod sim;
pub mod swarm;
pub mod topology;

pub use error::{Error, Result};
pub use mac::{contention_window, frame_durations, FrameDurations, MacParams};
pub use metrics::{DelayVector, MetricsReport};
pub use pipeline::{
    two_step_optimize, sweep_n, OptimizationResult, PipelineParams, SimEvaluator, SweepReport,
};
pub use sim::{run_simulation, CwCombination, NodeStats, SimConfig, SimOutcome};
pub use swarm::{run_swarm, Evaluator, SwarmOutcome, SwarmParams};
pub use topology::Topology;
