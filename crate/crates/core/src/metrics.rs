//! Performance metrics derived from simulation counters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{NodeStats, SimOutcome};

/// Per-node one-hop delays in microseconds. A node with no delivered
/// packet carries `f64::INFINITY`.
pub type DelayVector = Vec<f64>;

/// Measurement window divided by delivered packets.
pub fn one_hop_delay(stats: &NodeStats) -> Result<f64> {
    if stats.successes == 0 {
        return Err(Error::UndefinedDelay);
    }
    Ok(stats.busy_window_us / stats.successes as f64)
}

/// Sum of squared deviations from `target_us` (not normalized by n).
pub fn objective(delays: &[f64], target_us: f64) -> f64 {
    delays.iter().map(|d| (d - target_us).powi(2)).sum()
}

pub fn one_hop_throughput(stats: &NodeStats, payload_bits: f64, window_us: f64) -> Result<f64> {
    if !(window_us > 0.0) {
        return Err(Error::InvalidParams(format!("window must be positive, got {window_us}")));
    }
    Ok(stats.successes as f64 * payload_bits / (window_us * 1e-6))
}

/// Fraction of eligible backoff decisions on which the node transmitted.
pub fn transmission_probability(stats: &NodeStats) -> Result<f64> {
    let total = stats.tx_starts + stats.decision_slots;
    if total == 0 {
        return Err(Error::UndefinedProbability);
    }
    Ok(stats.tx_starts as f64 / total as f64)
}

/// Delay from node 0 to node `i` along the relay chain, i.e. the sum of the
/// one-hop delays of nodes `0..i`.
pub fn end_to_end_delay(delays: &[f64], i: usize) -> Result<f64> {
    if i >= delays.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: delays.len(),
        });
    }
    Ok(delays[..i].iter().fold(0.0, |acc, d| acc + d))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    var.sqrt() / m
}

pub fn delay_vector(outcome: &SimOutcome) -> DelayVector {
    outcome
        .per_node
        .iter()
        .map(|s| one_hop_delay(s).unwrap_or(f64::INFINITY))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub delays_us: DelayVector,
    pub avg_delay_us: f64,
    pub throughput_bps: Vec<f64>,
    pub tx_probability: Vec<f64>,
    /// `e2e_us[i]`: delay from node 0 to node `i`.
    pub e2e_us: Vec<f64>,
}

impl MetricsReport {
    pub fn from_outcome(outcome: &SimOutcome, payload_bits: f64) -> Result<Self> {
        let delays_us = delay_vector(outcome);
        let throughput_bps = outcome
            .per_node
            .iter()
            .map(|s| one_hop_throughput(s, payload_bits, outcome.window_us))
            .collect::<Result<Vec<_>>>()?;
        let tx_probability = outcome
            .per_node
            .iter()
            .map(|s| transmission_probability(s).unwrap_or(0.0))
            .collect();
        let e2e_us = (0..delays_us.len())
            .map(|i| end_to_end_delay(&delays_us, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            avg_delay_us: mean(&delays_us),
            delays_us,
            throughput_bps,
            tx_probability,
            e2e_us,
        })
    }

    pub fn n(&self) -> usize {
        self.delays_us.len()
    }

    /// Delay from the first to the last node.
    pub fn e2e_last_us(&self) -> f64 {
        *self.e2e_us.last().expect("non-empty report")
    }
}
