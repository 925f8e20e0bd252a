//! Two-step contention window optimization.
//!
//! Step A drives every node's delay toward an aggressive goal below the
//! best uniform-window average and reports the average delay of the best
//! combination found. Step B reruns the swarm with that average as the
//! goal, so the winner is the combination whose delays sit closest to it.
//!
//! All simulations inside one optimization share the same replication
//! seeds, so the objective is a deterministic function of the combination.

use std::collections::HashMap;

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{delay_vector, mean, DelayVector, MetricsReport};
use crate::reference::reference_windows;
use crate::sim::{replication_seed, run_simulation, CwCombination, SimConfig, SimOutcome};
use crate::swarm::{run_swarm, Evaluator, SwarmOutcome, SwarmParams, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineParams {
    /// Step A goal as a fraction of the best uniform-window average delay.
    pub d_avg_factor: f64,
    /// Step B stops once the per-node RMS deviation is below this fraction
    /// of the Step A delay.
    pub balance_rms_frac: f64,
    /// Independent windows pooled per evaluation.
    pub replications: u32,
    /// Uniform windows tried when picking the Step A goal.
    pub sweep_cws: Vec<u32>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            d_avg_factor: 0.8,
            balance_rms_frac: 0.05,
            replications: 3,
            sweep_cws: vec![4, 8, 16, 32, 64],
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_avg_factor > 0.0 && self.d_avg_factor.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "d_avg_factor must be positive, got {}",
                self.d_avg_factor
            )));
        }
        if !(self.balance_rms_frac >= 0.0 && self.balance_rms_frac.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "balance_rms_frac must be >= 0, got {}",
                self.balance_rms_frac
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be >= 1".into()));
        }
        if self.sweep_cws.is_empty() {
            return Err(Error::InvalidParams("sweep_cws is empty".into()));
        }
        Ok(())
    }
}

/// Simulation-backed evaluator with common random numbers and memoization.
pub struct SimEvaluator {
    base: SimConfig,
    replications: u32,
    cache: Mutex<HashMap<CwCombination, SimOutcome>>,
}

impl SimEvaluator {
    /// `base.seed` is the master seed from which replication seeds derive.
    pub fn new(base: SimConfig, replications: u32) -> Result<Self> {
        base.validate()?;
        if replications == 0 {
            return Err(Error::InvalidParams("replications must be >= 1".into()));
        }
        Ok(Self {
            base,
            replications,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.base
    }

    /// Replications pooled into one outcome.
    pub fn outcome(&self, cw: &CwCombination) -> Result<SimOutcome> {
        if let Some(hit) = self.cache.lock().get(cw) {
            return Ok(hit.clone());
        }
        let runs = (0..self.replications)
            .map(|r| {
                let cfg = SimConfig {
                    seed: replication_seed(self.base.seed, r),
                    ..self.base.clone()
                };
                run_simulation(&cfg, cw)
            })
            .collect::<Result<Vec<_>>>()?;
        let pooled = SimOutcome::pooled(&runs).expect("at least one replication");
        self.cache.lock().insert(cw.clone(), pooled.clone());
        Ok(pooled)
    }

    pub fn report(&self, cw: &CwCombination) -> Result<MetricsReport> {
        MetricsReport::from_outcome(&self.outcome(cw)?, self.base.mac.payload_bits)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().len()
    }
}

impl Evaluator for SimEvaluator {
    fn evaluate(&self, cw: &CwCombination) -> Result<DelayVector> {
        Ok(delay_vector(&self.outcome(cw)?))
    }
}

/// Scales the best average delay over uniform windows by `factor`.
pub fn choose_d_avg(eval: &SimEvaluator, cws: &[u32], factor: f64) -> Result<f64> {
    let n = eval.config().topo.n;
    let averages = cws
        .par_iter()
        .map(|&w| {
            let delays = eval.evaluate(&CwCombination::uniform(n, w))?;
            if delays.iter().any(|d| !d.is_finite()) {
                return Err(Error::Config(format!(
                    "uniform window {w} delivered no packets for some node; lengthen the window"
                )));
            }
            Ok(mean(&delays))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = averages.into_iter().fold(f64::INFINITY, f64::min);
    Ok(factor * best)
}

fn swarm_rng(master: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(step);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAResult {
    pub d_star_us: f64,
    pub swarm: SwarmOutcome,
}

/// Runs the swarm toward `d_avg` and returns the mean delay of its best
/// combination. The goal is assumed unreachable, so the threshold in
/// `params` is normally zero.
pub fn step_a<E: Evaluator + ?Sized>(
    n: usize,
    d_avg_us: f64,
    eval: &E,
    params: &SwarmParams,
    seed: u64,
) -> Result<StepAResult> {
    let swarm = run_swarm(n, d_avg_us, eval, params, &mut swarm_rng(seed, 1))?;
    Ok(StepAResult {
        d_star_us: mean(&swarm.best.delays),
        swarm,
    })
}

/// Balance threshold: `n * (frac * d_star)^2`.
pub fn balance_threshold(n: usize, d_star_us: f64, frac: f64) -> f64 {
    n as f64 * (frac * d_star_us).powi(2)
}

pub fn step_b<E: Evaluator + ?Sized>(
    n: usize,
    d_star_us: f64,
    eval: &E,
    params: &SwarmParams,
    balance_rms_frac: f64,
    seed: u64,
) -> Result<SwarmOutcome> {
    let params = SwarmParams {
        threshold: balance_threshold(n, d_star_us, balance_rms_frac),
        ..params.clone()
    };
    run_swarm(n, d_star_us, eval, &params, &mut swarm_rng(seed, 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub n: usize,
    pub d_avg_target_us: f64,
    pub d_star_us: f64,
    pub step_a_cw: CwCombination,
    pub optimal_cw: CwCombination,
    pub balanced_delays: DelayVector,
    pub step_b_threshold: f64,
    pub step_a_trace: Vec<TraceRecord>,
    pub step_b_trace: Vec<TraceRecord>,
    pub baseline_cw: CwCombination,
    pub baseline_report: MetricsReport,
    pub optimized_report: MetricsReport,
}

/// Goal selection, Step A, Step B, then baseline and optimized reports on
/// the same replication seeds.
pub fn two_step_optimize(
    cfg: &SimConfig,
    swarm: &SwarmParams,
    pipeline: &PipelineParams,
) -> Result<OptimizationResult> {
    pipeline.validate()?;
    swarm.validate()?;
    let n = cfg.topo.n;
    let eval = SimEvaluator::new(cfg.clone(), pipeline.replications)?;
    let d_avg = choose_d_avg(&eval, &pipeline.sweep_cws, pipeline.d_avg_factor)?;

    let step_a_params = SwarmParams {
        threshold: 0.0,
        ..swarm.clone()
    };
    let a = step_a(n, d_avg, &eval, &step_a_params, cfg.seed)?;
    let b = step_b(n, a.d_star_us, &eval, swarm, pipeline.balance_rms_frac, cfg.seed)?;

    let baseline_cw = CwCombination::uniform(n, cfg.mac.cw_standard);
    Ok(OptimizationResult {
        n,
        d_avg_target_us: d_avg,
        d_star_us: a.d_star_us,
        step_a_cw: a.swarm.best.cw.clone(),
        optimal_cw: b.best.cw.clone(),
        balanced_delays: b.best.delays.clone(),
        step_b_threshold: balance_threshold(n, a.d_star_us, pipeline.balance_rms_frac),
        step_a_trace: a.swarm.trace,
        step_b_trace: b.trace,
        baseline_report: eval.report(&baseline_cw)?,
        optimized_report: eval.report(&b.best.cw)?,
        baseline_cw,
    })
}

/// Delay budget for first-to-last delivery.
pub const E2E_LIMIT_US: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub optimal_cw: CwCombination,
    pub optimized_e2e_us: f64,
    pub baseline_e2e_us: f64,
    pub reference_cw: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub n: usize,
    pub baseline_e2e_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// First-to-last delay at the standard window, extended past the sweep
    /// until the delay budget is exceeded.
    pub baseline_curve: Vec<BaselinePoint>,
    pub first_n_over_limit: Option<usize>,
}

pub fn validate_sweep_n(n: usize) -> Result<()> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "n = {n} is odd; each platoon contributes two backbone vehicles"
        )));
    }
    if !(4..=24).contains(&n) {
        return Err(Error::InvalidParams(format!("n = {n} outside 4..=24")));
    }
    Ok(())
}

/// Largest chain examined when looking for the delay budget crossing.
pub const CROSSING_SEARCH_MAX_N: usize = 40;

pub fn sweep_n(
    template: &SimConfig,
    n_list: &[usize],
    swarm: &SwarmParams,
    pipeline: &PipelineParams,
) -> Result<SweepReport> {
    for &n in n_list {
        validate_sweep_n(n)?;
    }
    let reference = reference_windows();
    let with_n = |n: usize| SimConfig {
        topo: crate::topology::Topology {
            n,
            ..template.topo.clone()
        },
        active_mask: None,
        ..template.clone()
    };

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let r = two_step_optimize(&with_n(n), swarm, pipeline)?;
        rows.push(SweepRow {
            n,
            optimized_e2e_us: r.optimized_report.e2e_last_us(),
            baseline_e2e_us: r.baseline_report.e2e_last_us(),
            optimal_cw: r.optimal_cw,
            reference_cw: reference.get(&n).cloned(),
        });
    }

    let mut baseline_curve: Vec<BaselinePoint> = rows
        .iter()
        .map(|r| BaselinePoint {
            n: r.n,
            baseline_e2e_us: r.baseline_e2e_us,
        })
        .collect();
    baseline_curve.sort_by_key(|p| p.n);
    let over = |c: &[BaselinePoint]| c.iter().find(|p| p.baseline_e2e_us > E2E_LIMIT_US).map(|p| p.n);
    let mut next = baseline_curve.last().map_or(4, |p| p.n + 2);
    while over(&baseline_curve).is_none() && next <= CROSSING_SEARCH_MAX_N {
        let cfg = with_n(next);
        let eval = SimEvaluator::new(cfg.clone(), pipeline.replications)?;
        let report = eval.report(&CwCombination::uniform(next, cfg.mac.cw_standard))?;
        baseline_curve.push(BaselinePoint {
            n: next,
            baseline_e2e_us: report.e2e_last_us(),
        });
        next += 2;
    }
    Ok(SweepReport {
        rows,
        first_n_over_limit: over(&baseline_curve),
        baseline_curve,
    })
}
