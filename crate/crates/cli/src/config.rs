//! Experiment configuration file.
//!
//! A TOML document whose keys may be written flat (`mac.slot_us = 13`) or
//! as tables. Every key is optional; unset keys take the defaults of the
//! selected profile. Unknown keys are rejected.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 1 |
//! | `mac.slot_us`, `mac.sifs_us`, `mac.difs_us` | 13, 28, 54 |
//! | `mac.ack_bits`, `mac.payload_bits`, `mac.bitrate_bps` | 240, 2048, 6e6 |
//! | `mac.p_error`, `mac.retry_limit` | 0.1, 5 |
//! | `mac.cw_standard`, `mac.cw_lo`, `mac.cw_hi` | 64, 1, 64 |
//! | `topo.n`, `topo.a` | 6, 0.5 |
//! | `sim.window_us`, `sim.warmup_us` | 2e6 (full) / 5e5 (fast), 1e6 |
//! | `swarm.m`, `swarm.c1`, `swarm.c2`, `swarm.w` | 15, 1.5, 1.5, 0.8 |
//! | `swarm.dcw_max`, `swarm.iter_limit` | 10, 300 (full) / 60 (fast) |
//! | `swarm.per_component_random` | false |
//! | `pipeline.d_avg_factor`, `pipeline.balance_rms_frac` | 0.8, 0.05 |
//! | `pipeline.replications`, `pipeline.sweep_cws` | 3, [4, 8, 16, 32, 64] |

use std::path::Path;

use platoon_core::{MacParams, PipelineParams, SimConfig, SwarmParams, Topology};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub window_us: f64,
    pub warmup_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mac: MacParams,
    pub topo: Topology,
    pub sim: SimSection,
    pub swarm: SwarmParams,
    pub pipeline: PipelineParams,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn defaults(profile: Profile) -> Self {
        let (window_us, iter_limit) = match profile {
            Profile::Full => (2.0e6, 300),
            Profile::Fast => (5.0e5, 60),
        };
        Self {
            seed: 1,
            mac: MacParams::default(),
            topo: Topology::default(),
            sim: SimSection {
                window_us,
                warmup_us: 1.0e6,
            },
            swarm: SwarmParams {
                iter_limit,
                ..SwarmParams::default()
            },
            pipeline: PipelineParams::default(),
        }
    }

    /// Overlays `text` on the profile defaults.
    pub fn from_toml(text: &str, profile: Profile) -> Result<Self, ConfigError> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        let base = toml::Table::try_from(Self::defaults(profile))
            .map_err(|e| ConfigError(e.to_string()))?;
        let merged = merge(base, user);
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        cfg.finish()
    }

    pub fn load(path: Option<&Path>, profile: Profile) -> Result<Self, ConfigError> {
        match path {
            None => Self::defaults(profile).finish(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text, profile)
            }
        }
    }

    fn finish(mut self) -> Result<Self, ConfigError> {
        let defaults = SwarmParams::default();
        let user_set_bounds = (self.swarm.cw_lo, self.swarm.cw_hi) != (defaults.cw_lo, defaults.cw_hi);
        if user_set_bounds && (self.swarm.cw_lo, self.swarm.cw_hi) != (self.mac.cw_lo, self.mac.cw_hi) {
            return Err(ConfigError(
                "swarm.cw_lo/cw_hi must match mac.cw_lo/cw_hi (set the mac keys only)".into(),
            ));
        }
        self.swarm.cw_lo = self.mac.cw_lo;
        self.swarm.cw_hi = self.mac.cw_hi;
        let err = |e: platoon_core::Error| ConfigError(e.to_string());
        self.mac.validate().map_err(err)?;
        self.topo.validate().map_err(err)?;
        self.swarm.validate().map_err(err)?;
        self.pipeline.validate().map_err(err)?;
        self.sim_config().validate().map_err(err)?;
        Ok(self)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            mac: self.mac.clone(),
            topo: self.topo.clone(),
            window_us: self.sim.window_us,
            warmup_us: self.sim.warmup_us,
            seed: self.seed,
            active_mask: None,
        }
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
