//! Particle swarm search over per-node minimum contention windows.
//!
//! Each particle keeps a continuous position; the combination actually
//! simulated is its per-component nearest-integer rounding. Personal and
//! global bests store the evaluated integer combination together with the
//! objective value it produced, and are only replaced on strict
//! improvement, so the recorded global best never gets worse.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{objective, DelayVector};
use crate::sim::CwCombination;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmParams {
    /// Number of particles.
    pub m: usize,
    /// Weight on the global best.
    pub c1: f64,
    /// Weight on the personal best.
    pub c2: f64,
    /// Inertia.
    pub w: f64,
    pub dcw_max: f64,
    pub iter_limit: usize,
    /// Stop once the global best objective drops below this.
    pub threshold: f64,
    pub cw_lo: u32,
    pub cw_hi: u32,
    /// Draw r1, r2 per component instead of once per particle.
    pub per_component_random: bool,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            m: 15,
            c1: 1.5,
            c2: 1.5,
            w: 0.8,
            dcw_max: 10.0,
            iter_limit: 300,
            threshold: 0.0,
            cw_lo: 1,
            cw_hi: 64,
            per_component_random: false,
        }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.m < 2 {
            return bad(format!("swarm needs at least 2 particles, got {}", self.m));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return bad(format!("learning coefficients must be positive, got {} / {}", self.c1, self.c2));
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return bad(format!("inertia must lie in (0, 1), got {}", self.w));
        }
        if !(self.dcw_max > 0.0) {
            return bad(format!("velocity clamp must be positive, got {}", self.dcw_max));
        }
        if self.iter_limit < 1 {
            return bad("iteration limit must be >= 1".into());
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return bad(format!("threshold must be >= 0, got {}", self.threshold));
        }
        if self.cw_lo < 1 || self.cw_lo > self.cw_hi {
            return bad(format!("need 1 <= cw_lo <= cw_hi, got [{}, {}]", self.cw_lo, self.cw_hi));
        }
        Ok(())
    }
}

/// An evaluated combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub cw: CwCombination,
    pub value: f64,
    pub delays: DelayVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest: Option<Best>,
}

impl Particle {
    pub fn combination(&self, lo: u32, hi: u32) -> CwCombination {
        CwCombination(
            self.position
                .iter()
                .map(|&x| (x.round() as i64).clamp(lo as i64, hi as i64) as u32)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub gbest_value: f64,
    pub gbest_cw: CwCombination,
    /// Largest |velocity| component held by any particle this iteration.
    pub max_abs_velocity: f64,
    pub min_evaluated_cw: u32,
    pub max_evaluated_cw: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub gbest: Option<Best>,
    /// Current iteration, starting at 1.
    pub t: usize,
    pub trace: Vec<TraceRecord>,
    cw_lo: u32,
    cw_hi: u32,
}

impl SwarmState {
    pub fn combinations(&self) -> Vec<CwCombination> {
        self.particles
            .iter()
            .map(|p| p.combination(self.cw_lo, self.cw_hi))
            .collect()
    }

    pub fn gbest_value(&self) -> f64 {
        self.gbest.as_ref().map_or(f64::INFINITY, |b| b.value)
    }

    pub fn max_abs_velocity(&self) -> f64 {
        self.particles
            .iter()
            .flat_map(|p| p.velocity.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Integer positions uniform on `[cw_lo, cw_hi]^n`, velocities uniform on
/// `[0, 1]^n`.
pub fn init_swarm<R: Rng + ?Sized>(n: usize, params: &SwarmParams, rng: &mut R) -> Result<SwarmState> {
    params.validate()?;
    if n < 2 {
        return Err(Error::InvalidTopology(format!("need at least 2 nodes, got {n}")));
    }
    let particles = (0..params.m)
        .map(|_| {
            let position = (0..n)
                .map(|_| rng.gen_range(params.cw_lo..=params.cw_hi) as f64)
                .collect();
            let velocity = (0..n).map(|_| rng.gen::<f64>()).collect();
            Particle {
                position,
                velocity,
                pbest: None,
            }
        })
        .collect();
    Ok(SwarmState {
        particles,
        gbest: None,
        t: 1,
        trace: Vec::new(),
        cw_lo: params.cw_lo,
        cw_hi: params.cw_hi,
    })
}

/// Personal and global best bookkeeping for the combinations evaluated at
/// the current iteration. Ties keep the incumbent.
pub fn update_bests(state: &mut SwarmState, values: &[f64], delays: Vec<DelayVector>) -> Result<()> {
    let m = state.particles.len();
    if values.len() != m || delays.len() != m {
        return Err(Error::CountMismatch {
            expected: m,
            got: values.len().min(delays.len()),
        });
    }
    let combos = state.combinations();
    let first = state.t == 1;

    let mut gmin: Option<usize> = None;
    for (j, &v) in values.iter().enumerate() {
        if gmin.is_none_or(|g| v < values[g]) {
            gmin = Some(j);
        }
    }

    for (j, ((particle, cw), d)) in state
        .particles
        .iter_mut()
        .zip(&combos)
        .zip(delays.iter())
        .enumerate()
    {
        let improves = particle.pbest.as_ref().is_none_or(|b| values[j] < b.value);
        if first || improves {
            particle.pbest = Some(Best {
                cw: cw.clone(),
                value: values[j],
                delays: d.clone(),
            });
        }
    }

    let g = gmin.expect("swarm has particles");
    let improves = state.gbest.as_ref().is_none_or(|b| values[g] < b.value);
    if first || improves {
        state.gbest = Some(Best {
            cw: combos[g].clone(),
            value: values[g],
            delays: delays[g].clone(),
        });
    }
    Ok(())
}

/// One velocity component update, clamped to `[-dcw_max, dcw_max]`.
#[allow(clippy::too_many_arguments)]
pub fn velocity_step(
    w: f64,
    prev: f64,
    c1: f64,
    r1: f64,
    global: f64,
    c2: f64,
    r2: f64,
    personal: f64,
    current: f64,
    dcw_max: f64,
) -> f64 {
    let v = w * prev + c1 * r1 * (global - current) + c2 * r2 * (personal - current);
    v.clamp(-dcw_max, dcw_max)
}

/// Moves every particle and advances the iteration counter. On the first
/// iteration the initial random velocity is applied as is.
pub fn update_positions<R: Rng + ?Sized>(state: &mut SwarmState, params: &SwarmParams, rng: &mut R) -> Result<()> {
    let Some(gbest) = state.gbest.clone() else {
        return Err(Error::InvalidParams("bests not populated before position update".into()));
    };
    let (lo, hi) = (params.cw_lo as f64, params.cw_hi as f64);
    let first = state.t == 1;
    for particle in &mut state.particles {
        let pbest = particle
            .pbest
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("particle without personal best".into()))?
            .cw
            .clone();
        let (mut r1, mut r2) = (rng.gen::<f64>(), rng.gen::<f64>());
        for i in 0..particle.position.len() {
            if params.per_component_random && i > 0 {
                r1 = rng.gen();
                r2 = rng.gen();
            }
            let current = particle.position[i];
            let v = if first {
                particle.velocity[i].clamp(-params.dcw_max, params.dcw_max)
            } else {
                velocity_step(
                    params.w,
                    particle.velocity[i],
                    params.c1,
                    r1,
                    gbest.cw.0[i] as f64,
                    params.c2,
                    r2,
                    pbest.0[i] as f64,
                    current,
                    params.dcw_max,
                )
            };
            particle.velocity[i] = v;
            particle.position[i] = (current + v).clamp(lo, hi);
        }
    }
    state.t += 1;
    Ok(())
}

/// Maps a combination to per-node delays. Must be deterministic.
pub trait Evaluator: Sync {
    fn evaluate(&self, cw: &CwCombination) -> Result<DelayVector>;
}

impl<F> Evaluator for F
where
    F: Fn(&CwCombination) -> Result<DelayVector> + Sync,
{
    fn evaluate(&self, cw: &CwCombination) -> Result<DelayVector> {
        self(cw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmOutcome {
    pub best: Best,
    pub trace: Vec<TraceRecord>,
    pub evaluations: usize,
}

/// Evaluate, update bests, test the stop rule, move; repeat until the
/// global best objective falls below `threshold` or `iter_limit`
/// iterations have run.
pub fn run_swarm<E, R>(
    n: usize,
    target_us: f64,
    evaluator: &E,
    params: &SwarmParams,
    rng: &mut R,
) -> Result<SwarmOutcome>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = init_swarm(n, params, rng)?;
    let mut evaluations = 0;
    loop {
        let combos = state.combinations();
        let delays = combos
            .par_iter()
            .map(|cw| evaluator.evaluate(cw))
            .collect::<Result<Vec<_>>>()?;
        evaluations += combos.len();
        let values: Vec<f64> = delays.iter().map(|d| objective(d, target_us)).collect();
        update_bests(&mut state, &values, delays)?;

        let gbest = state.gbest.as_ref().expect("populated");
        state.trace.push(TraceRecord {
            iteration: state.t,
            gbest_value: gbest.value,
            gbest_cw: gbest.cw.clone(),
            max_abs_velocity: state.max_abs_velocity(),
            min_evaluated_cw: combos.iter().flat_map(|c| c.0.iter().copied()).min().unwrap_or(0),
            max_evaluated_cw: combos.iter().flat_map(|c| c.0.iter().copied()).max().unwrap_or(0),
        });

        if gbest.value < params.threshold || state.t >= params.iter_limit {
            break;
        }
        update_positions(&mut state, params, rng)?;
    }
    Ok(SwarmOutcome {
        best: state.gbest.expect("populated"),
        trace: state.trace,
        evaluations,
    })
}
