//! MAC/PHY constants and frame timing for the DCF model.
//!
//! All durations are in microseconds. The exchange timeline is:
//! data frame, SIFS, ACK, then DIFS before the sender contends again. A
//! failed exchange occupies the same span because the sender sits out the
//! ACK timeout (SIFS + ACK airtime) before concluding the frame was lost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MAC/PHY parameters. Defaults are the values used for the published
/// platoon experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacParams {
    pub slot_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub ack_bits: f64,
    pub payload_bits: f64,
    pub bitrate_bps: f64,
    /// Per-data-frame channel error probability.
    pub p_error: f64,
    /// Maximum number of retransmissions before a packet is dropped.
    pub retry_limit: u32,
    /// Standard minimum contention window (the baseline).
    pub cw_standard: u32,
    pub cw_lo: u32,
    pub cw_hi: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        Self {
            slot_us: 13.0,
            sifs_us: 28.0,
            difs_us: 54.0,
            ack_bits: 240.0,
            payload_bits: 2048.0,
            bitrate_bps: 6.0e6,
            p_error: 0.1,
            retry_limit: 5,
            cw_standard: 64,
            cw_lo: 1,
            cw_hi: 64,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("slot_us", self.slot_us),
            ("sifs_us", self.sifs_us),
            ("difs_us", self.difs_us),
            ("ack_bits", self.ack_bits),
            ("bitrate_bps", self.bitrate_bps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        // A zero payload is a legal degenerate case for timing checks.
        if !(self.payload_bits.is_finite() && self.payload_bits >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "payload_bits must be non-negative, got {}",
                self.payload_bits
            )));
        }
        if !(0.0..=1.0).contains(&self.p_error) {
            return Err(Error::InvalidParams(format!(
                "p_error must lie in [0, 1], got {}",
                self.p_error
            )));
        }
        if self.cw_lo < 1 || self.cw_lo > self.cw_hi {
            return Err(Error::InvalidParams(format!(
                "need 1 <= cw_lo <= cw_hi, got [{}, {}]",
                self.cw_lo, self.cw_hi
            )));
        }
        if self.cw_standard < self.cw_lo || self.cw_standard > self.cw_hi {
            return Err(Error::InvalidParams(format!(
                "cw_standard {} outside [{}, {}]",
                self.cw_standard, self.cw_lo, self.cw_hi
            )));
        }
        Ok(())
    }

    /// Window size for retry stage `stage` given a node's minimum window.
    pub fn contention_window(&self, stage: u32, w0: u32) -> Result<u64> {
        contention_window(stage, w0, self.retry_limit)
    }
}

/// `W_k = w0 * 2^k`. The backoff counter is drawn from `[0, W_k - 1]`.
pub fn contention_window(stage: u32, w0: u32, retry_limit: u32) -> Result<u64> {
    if stage > retry_limit {
        return Err(Error::InvalidStage {
            stage,
            limit: retry_limit,
        });
    }
    if w0 == 0 {
        return Err(Error::InvalidParams("minimum contention window must be >= 1".into()));
    }
    (w0 as u64)
        .checked_shl(stage)
        .filter(|w| w >> stage == w0 as u64)
        .ok_or_else(|| Error::InvalidParams(format!("window overflow at stage {stage}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameDurations {
    pub t_data_us: f64,
    pub t_ack_us: f64,
    /// Successful exchange: data + SIFS + ACK + DIFS.
    pub t_success_us: f64,
    /// Failed exchange: data + ACK timeout + DIFS.
    pub t_fail_us: f64,
}

pub fn frame_durations(p: &MacParams) -> Result<FrameDurations> {
    p.validate()?;
    let t_data_us = p.payload_bits / p.bitrate_bps * 1e6;
    let t_ack_us = p.ack_bits / p.bitrate_bps * 1e6;
    let t_success_us = t_data_us + p.sifs_us + t_ack_us + p.difs_us;
    Ok(FrameDurations {
        t_data_us,
        t_ack_us,
        t_success_us,
        t_fail_us: t_success_us,
    })
}

/// Integer-nanosecond timing used by the event engine, so that equal
/// instants compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NsTiming {
    pub slot: u64,
    pub sifs: u64,
    pub difs: u64,
    pub data: u64,
    pub ack: u64,
}

pub(crate) fn us_to_ns(us: f64) -> u64 {
    (us * 1e3).round() as u64
}

impl NsTiming {
    pub fn from_params(p: &MacParams) -> Result<Self> {
        let d = frame_durations(p)?;
        let t = Self {
            slot: us_to_ns(p.slot_us),
            sifs: us_to_ns(p.sifs_us),
            difs: us_to_ns(p.difs_us),
            data: us_to_ns(d.t_data_us),
            ack: us_to_ns(d.t_ack_us),
        };
        if t.slot == 0 || t.ack == 0 {
            return Err(Error::InvalidParams("durations below 1 ns resolution".into()));
        }
        Ok(t)
    }

    /// Time the sender is tied up by its own exchange, excluding DIFS.
    pub fn exchange(&self) -> u64 {
        self.data + self.sifs + self.ack
    }
}
