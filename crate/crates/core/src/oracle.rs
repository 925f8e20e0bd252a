//! Independent references for the simulator and the swarm: a closed-form
//! delay for a lone sender, and exhaustive search over small window grids.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::{frame_durations, MacParams};
use crate::metrics::{mean, objective};
use crate::sim::CwCombination;
use crate::swarm::Evaluator;

/// Expected measurement time per delivered packet for a single sender with
/// no contention. Attempt `k` costs `(W_k - 1) / 2` slots of backoff plus
/// one exchange and happens only if the `k` earlier attempts failed; the
/// packet is dropped after `retry_limit + 1` attempts. Returns infinity
/// when nothing can be delivered.
pub fn analytic_single_sender_delay(p: &MacParams, w0: u32) -> Result<f64> {
    let d = frame_durations(p)?;
    let pe = p.p_error;
    let mut expected_time = 0.0;
    let mut reach = 1.0;
    for k in 0..=p.retry_limit {
        let window = p.contention_window(k, w0)? as f64;
        expected_time += reach * ((window - 1.0) / 2.0 * p.slot_us + d.t_success_us);
        reach *= pe;
    }
    let p_delivered = 1.0 - pe.powi(p.retry_limit as i32 + 1);
    if p_delivered <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(expected_time / p_delivered)
}

pub const GRID_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Candidate windows for each node.
    pub candidates: Vec<Vec<u32>>,
    pub target_us: f64,
}

impl GridSpec {
    pub fn uniform(n: usize, candidates: &[u32], target_us: f64) -> Self {
        Self {
            candidates: vec![candidates.to_vec(); n],
            target_us,
        }
    }

    pub fn size(&self) -> u128 {
        self.candidates
            .iter()
            .map(|c| c.len() as u128)
            .try_fold(1u128, |acc, k| acc.checked_mul(k))
            .unwrap_or(u128::MAX)
    }

    /// Every combination in lexicographic order of candidate indices.
    pub fn combinations(&self) -> Result<Vec<CwCombination>> {
        let size = self.size();
        if size > GRID_LIMIT {
            return Err(Error::GridTooLarge {
                combinations: size,
                limit: GRID_LIMIT,
            });
        }
        if size == 0 {
            return Err(Error::InvalidParams("empty candidate set".into()));
        }
        let mut out = vec![CwCombination(Vec::new())];
        for cands in &self.candidates {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    cands.iter().map(move |&c| {
                        let mut v = prefix.0.clone();
                        v.push(c);
                        CwCombination(v)
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub cw: CwCombination,
    pub objective: f64,
    pub mean_delay_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub entries: Vec<GridEntry>,
    pub best: GridEntry,
}

/// Exhaustive minimum; ties go to the lexicographically smallest vector.
pub fn grid_search<E: Evaluator + ?Sized>(spec: &GridSpec, eval: &E) -> Result<GridResult> {
    let combos = spec.combinations()?;
    let entries = combos
        .into_par_iter()
        .map(|cw| {
            let delays = eval.evaluate(&cw)?;
            Ok(GridEntry {
                objective: objective(&delays, spec.target_us),
                mean_delay_us: mean(&delays),
                cw,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = entries
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| a.cw.cmp(&b.cw)))
        .expect("non-empty grid")
        .clone();
    Ok(GridResult { entries, best })
}

impl GridResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_grid_csv(&self.entries, out)
    }
}

pub fn write_grid_csv<W: Write>(entries: &[GridEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["combination", "objective_us2", "mean_delay_ms"])?;
    for e in entries {
        w.write_record([
            e.cw.to_string(),
            format!("{}", e.objective),
            format!("{:.6}", e.mean_delay_us / 1e3),
        ])?;
    }
    w.flush()?;
    Ok(())
}
