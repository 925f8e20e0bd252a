//! Command implementations for the `platoon` binary.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use platoon_core::metrics::MetricsReport;
use platoon_core::oracle::{grid_search, write_grid_csv, GridSpec};
use platoon_core::pipeline::{choose_d_avg, SimEvaluator};
use platoon_core::swarm::TraceRecord;
use platoon_core::{CwCombination, OptimizationResult, SweepReport};
use serde::Serialize;

use crate::config::{ExperimentConfig, Profile};
use crate::output::OutputDir;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure classes, mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "usage error: {e:#}"),
            CliError::Config(e) => write!(f, "config error: {e:#}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<platoon_core::Error> for CliError {
    fn from(e: platoon_core::Error) -> Self {
        match e {
            platoon_core::Error::Config(_) => CliError::Config(e.into()),
            _ => CliError::Runtime(e.into()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub profile: Profile,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub force: bool,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), self.profile)
            .map_err(|e| CliError::Config(e.into()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<String>,
    master_seed: u64,
    output_directory: String,
    profile: Profile,
    args: BTreeMap<&'a str, String>,
    config: &'a ExperimentConfig,
    timestamp_unix: u64,
    tool_version: &'a str,
}

fn write_manifest(
    dir: &mut OutputDir,
    command: &str,
    common: &Common,
    cfg: &ExperimentConfig,
    args: BTreeMap<&str, String>,
) -> CliResult<()> {
    let manifest = RunManifest {
        command,
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        master_seed: cfg.seed,
        output_directory: common.out.display().to_string(),
        profile: common.profile,
        args,
        config: cfg,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tool_version: VERSION,
    };
    dir.write_json("manifest.json", &manifest)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    tool_version: &'a str,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn ms(us: f64) -> String {
    format!("{:.6}", us / 1e3)
}

fn write_node_csv(dir: &mut OutputDir, name: &str, report: &MetricsReport) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "one_hop_delay_ms", "throughput_mbps", "tx_probability", "e2e_ms"])
        .map_err(runtime)?;
    for i in 0..report.n() {
        w.write_record([
            (i + 1).to_string(),
            ms(report.delays_us[i]),
            format!("{:.6}", report.throughput_bps[i] / 1e6),
            format!("{:.6}", report.tx_probability[i]),
            ms(report.e2e_us[i]),
        ])
        .map_err(runtime)?;
    }
    dir.write_bytes(name, &w.into_inner().map_err(runtime)?)
}

/// Runs one combination and writes per-node metrics.
pub fn cmd_simulate(common: &Common, cw: &str) -> CliResult<()> {
    let cfg = common.load()?;
    let cw: CwCombination = cw.parse().map_err(|e: platoon_core::Error| CliError::Usage(e.into()))?;
    cw.check_bounds(cfg.topo.n, cfg.mac.cw_lo, cfg.mac.cw_hi)
        .map_err(|e| CliError::Usage(e.into()))?;
    let mut dir = OutputDir::create(&common.out, common.force)?;
    let eval = SimEvaluator::new(cfg.sim_config(), cfg.pipeline.replications)?;
    let outcome = eval.outcome(&cw)?;
    let report = MetricsReport::from_outcome(&outcome, cfg.mac.payload_bits)?;
    write_node_csv(&mut dir, "nodes.csv", &report)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        cw: &'a CwCombination,
        report: &'a MetricsReport,
        per_node: &'a [platoon_core::NodeStats],
    }
    dir.write_json(
        "summary.json",
        &Document {
            tool_version: VERSION,
            config: &cfg,
            body: Summary {
                cw: &cw,
                report: &report,
                per_node: &outcome.per_node,
            },
        },
    )?;
    write_manifest(&mut dir, "simulate", common, &cfg, BTreeMap::from([("cw", cw.to_string())]))?;
    dir.commit();
    Ok(())
}

fn write_trace(dir: &mut OutputDir, name: &str, trace: &[TraceRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "gbest_objective_us2",
        "gbest_cw",
        "max_abs_velocity",
        "min_evaluated_cw",
        "max_evaluated_cw",
    ])
    .map_err(runtime)?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{}", r.gbest_value),
            r.gbest_cw.to_string(),
            format!("{:.6}", r.max_abs_velocity),
            r.min_evaluated_cw.to_string(),
            r.max_evaluated_cw.to_string(),
        ])
        .map_err(runtime)?;
    }
    dir.write_bytes(name, &w.into_inner().map_err(runtime)?)
}

/// Runs the two-step optimization and writes the comparison against the
/// standard window.
pub fn cmd_optimize(common: &Common) -> CliResult<OptimizationResult> {
    let cfg = common.load()?;
    let mut dir = OutputDir::create(&common.out, common.force)?;
    let result = platoon_core::two_step_optimize(&cfg.sim_config(), &cfg.swarm, &cfg.pipeline)?;

    dir.write_json(
        "result.json",
        &Document {
            tool_version: VERSION,
            config: &cfg,
            body: &result,
        },
    )?;

    let (b, o) = (&result.baseline_report, &result.optimized_report);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "cw_optimal",
        "cw_standard",
        "one_hop_delay_optimal_ms",
        "one_hop_delay_standard_ms",
        "e2e_optimal_ms",
        "e2e_standard_ms",
        "throughput_optimal_mbps",
        "throughput_standard_mbps",
        "tx_probability_optimal",
        "tx_probability_standard",
    ])
    .map_err(runtime)?;
    for i in 0..result.n {
        w.write_record([
            (i + 1).to_string(),
            result.optimal_cw.0[i].to_string(),
            result.baseline_cw.0[i].to_string(),
            ms(o.delays_us[i]),
            ms(b.delays_us[i]),
            ms(o.e2e_us[i]),
            ms(b.e2e_us[i]),
            format!("{:.6}", o.throughput_bps[i] / 1e6),
            format!("{:.6}", b.throughput_bps[i] / 1e6),
            format!("{:.6}", o.tx_probability[i]),
            format!("{:.6}", b.tx_probability[i]),
        ])
        .map_err(runtime)?;
    }
    dir.write_bytes("comparison.csv", &w.into_inner().map_err(runtime)?)?;
    write_node_csv(&mut dir, "nodes_optimal.csv", o)?;
    write_node_csv(&mut dir, "nodes_standard.csv", b)?;
    write_trace(&mut dir, "trace_step_a.csv", &result.step_a_trace)?;
    write_trace(&mut dir, "trace_step_b.csv", &result.step_b_trace)?;
    write_manifest(&mut dir, "optimize", common, &cfg, BTreeMap::new())?;
    dir.commit();
    Ok(result)
}

/// Parses `4,6,8` or `4..24` (inclusive, step 2) or `4..24:4`.
pub fn parse_n_list(s: &str) -> anyhow::Result<Vec<usize>> {
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = rest.split_once(':').unwrap_or((rest, "2"));
        let (lo, hi, step): (usize, usize, usize) = (
            lo.trim().parse().context("range start")?,
            hi.trim().parse().context("range end")?,
            step.trim().parse().context("range step")?,
        );
        anyhow::ensure!(step > 0 && lo <= hi, "empty range {s:?}");
        return Ok((lo..=hi).step_by(step).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad n {t:?}")))
        .collect()
}

pub fn cmd_sweep(common: &Common, n_list: &str) -> CliResult<SweepReport> {
    let cfg = common.load()?;
    let ns = parse_n_list(n_list).map_err(CliError::Usage)?;
    for &n in &ns {
        platoon_core::pipeline::validate_sweep_n(n).map_err(|e| CliError::Usage(e.into()))?;
    }
    let mut dir = OutputDir::create(&common.out, common.force)?;
    let report = platoon_core::sweep_n(&cfg.sim_config(), &ns, &cfg.swarm, &cfg.pipeline)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "optimal_cw", "optimized_e2e_ms", "baseline_e2e_ms", "reference_cw"])
        .map_err(runtime)?;
    for r in &report.rows {
        let reference = r.reference_cw.as_ref().map_or(String::new(), |v| {
            v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
        });
        w.write_record([
            r.n.to_string(),
            r.optimal_cw.to_string(),
            ms(r.optimized_e2e_us),
            ms(r.baseline_e2e_us),
            reference,
        ])
        .map_err(runtime)?;
    }
    dir.write_bytes("table2.csv", &w.into_inner().map_err(runtime)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "baseline_e2e_ms"]).map_err(runtime)?;
    for p in &report.baseline_curve {
        w.write_record([p.n.to_string(), ms(p.baseline_e2e_us)]).map_err(runtime)?;
    }
    dir.write_bytes("fig4.csv", &w.into_inner().map_err(runtime)?)?;

    dir.write_json(
        "summary.json",
        &Document {
            tool_version: VERSION,
            config: &cfg,
            body: &report,
        },
    )?;
    write_manifest(&mut dir, "sweep", common, &cfg, BTreeMap::from([("n_list", n_list.to_string())]))?;
    dir.commit();

    println!("{:>3}  {:<60}  reference", "n", "optimal cw");
    for r in &report.rows {
        let reference = r.reference_cw.as_ref().map_or(String::from("-"), |v| format!("{v:?}"));
        println!("{:>3}  {:<60}  {}", r.n, format!("{:?}", r.optimal_cw.0), reference);
    }
    match report.first_n_over_limit {
        Some(n) => println!("first n with baseline first-to-last delay over 100 ms: {n}"),
        None => println!("baseline first-to-last delay stays under 100 ms up to n = {}", platoon_core::pipeline::CROSSING_SEARCH_MAX_N),
    }
    Ok(report)
}

/// Exhaustive grid over uniform candidate sets.
pub fn cmd_oracle(common: &Common, candidates: &str, target_us: Option<f64>) -> CliResult<()> {
    let cfg = common.load()?;
    let cands: CwCombination = candidates
        .parse()
        .map_err(|e: platoon_core::Error| CliError::Usage(e.into()))?;
    if cands.is_empty() {
        return Err(CliError::Usage(anyhow::anyhow!("no candidates given")));
    }
    let spec = GridSpec::uniform(cfg.topo.n, cands.as_slice(), 0.0);
    // Check the guard before any simulation runs.
    spec.combinations().map_err(|e| CliError::Usage(e.into()))?;
    let mut dir = OutputDir::create(&common.out, common.force)?;
    let eval = SimEvaluator::new(cfg.sim_config(), cfg.pipeline.replications)?;
    let target_us = match target_us {
        Some(t) => t,
        None => choose_d_avg(&eval, &cfg.pipeline.sweep_cws, cfg.pipeline.d_avg_factor)?,
    };
    let spec = GridSpec { target_us, ..spec };
    let result = grid_search(&spec, &eval)?;

    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    dir.write_bytes("grid.csv", &buf)?;
    let mut buf = Vec::new();
    write_grid_csv(std::slice::from_ref(&result.best), &mut buf)?;
    dir.write_bytes("best.csv", &buf)?;
    write_manifest(
        &mut dir,
        "oracle",
        common,
        &cfg,
        BTreeMap::from([
            ("candidates", candidates.to_string()),
            ("target_us", format!("{target_us}")),
        ]),
    )?;
    dir.commit();
    Ok(())
}
