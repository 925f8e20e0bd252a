//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.
//!
//! Run with `cargo test -p platoon-cli --test acceptance -- --nocapture`
//! to see the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use platoon_core::metrics::{
    coefficient_of_variation, end_to_end_delay, mean, objective, one_hop_delay, one_hop_throughput,
    transmission_probability,
};
use platoon_core::oracle::{analytic_single_sender_delay, grid_search, GridSpec};
use platoon_core::pipeline::{choose_d_avg, step_a, SimEvaluator};
use platoon_core::swarm::{init_swarm, update_bests, velocity_step, Particle};
use platoon_core::{
    contention_window, run_simulation, CwCombination, MacParams, NodeStats, OptimizationResult, SimConfig,
    SwarmParams, SweepReport, Topology,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SINGLE_SENDER_TOL: f64 = 0.02;
const GRID_RATIO_LIMIT: f64 = 1.05;
const CV_LIMIT: f64 = 0.10;
const MEAN_DELAY_RANGE_MS: (f64, f64) = (1.6, 6.4);
const INCREMENT_TOL: f64 = 0.15;
const THROUGHPUT_RATIO: f64 = 0.95;
const DCW_MAX: f64 = 10.0;

struct Report {
    lines: Vec<(u32, bool, String)>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, checks: Vec<(bool, String)>, elapsed: Duration) {
        let pass = checks.iter().all(|(ok, _)| *ok);
        let failed: Vec<&str> = checks.iter().filter(|(ok, _)| !ok).map(|(_, m)| m.as_str()).collect();
        let detail = if pass {
            format!("{} checks", checks.len())
        } else {
            failed.join("; ")
        };
        let line = format!(
            "criterion {id:>2} {name}: {} ({detail}) [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.lines.push((id, pass, line));
    }
}

fn check(ok: bool, msg: impl Into<String>) -> (bool, String) {
    (ok, msg.into())
}

fn platoon(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_platoon"))
        .args(args)
        .env_remove("PLATOON_OUT_DIR")
        .output()
        .expect("run platoon");
    assert!(
        out.status.success(),
        "platoon {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn equation_suite() -> Vec<(bool, String)> {
    let mut c = Vec::new();
    let mac = MacParams::default();
    c.push(check(contention_window(0, 64, 5).unwrap() == 64, "W_0 at w0=64"));
    c.push(check(contention_window(0, 1, 5).unwrap() == 1, "W_0 at w0=1"));
    c.push(check(contention_window(3, 20, 5).unwrap() == 160, "W_3 at w0=20"));
    c.push(check(contention_window(6, 20, 5).is_err(), "stage above retry limit"));
    for k in 0..5 {
        let (a, b) = (contention_window(k, 7, 5).unwrap(), contention_window(k + 1, 7, 5).unwrap());
        c.push(check(b == 2 * a, format!("doubling at stage {k}")));
    }

    let s = |window: f64, successes: u64| NodeStats {
        busy_window_us: window,
        successes,
        ..Default::default()
    };
    c.push(check(one_hop_delay(&s(1.0e6, 250)).unwrap() == 4000.0, "delay 1e6/250"));
    c.push(check((one_hop_delay(&s(1.0e6, 312)).unwrap() - 3205.128).abs() < 1e-3, "delay 1e6/312"));
    c.push(check(one_hop_delay(&s(1.0e6, 0)).is_err(), "delay with no success"));
    c.push(check(objective(&[3200.0; 3], 3200.0) == 0.0, "objective zero"));
    c.push(check(objective(&[3000.0, 4000.0], 3000.0) == 1.0e6, "objective 1e6"));
    c.push(check(one_hop_throughput(&s(1.0e6, 300), 2048.0, 1.0e6).unwrap() == 614_400.0, "throughput"));
    c.push(check(one_hop_throughput(&s(1.0e6, 0), 2048.0, 1.0e6).unwrap() == 0.0, "throughput zero"));
    let tp = NodeStats {
        tx_starts: 100,
        decision_slots: 9900,
        ..Default::default()
    };
    c.push(check(transmission_probability(&tp).unwrap() == 0.01, "tau 0.01"));
    c.push(check(end_to_end_delay(&[3200.0; 6], 5).unwrap() == 16_000.0, "e2e 16 ms"));
    c.push(check(end_to_end_delay(&[3200.0; 6], 0).unwrap() == 0.0, "e2e empty path"));
    c.push(check(end_to_end_delay(&[3000.0, 4000.0, 3500.0], 2).unwrap() == 7000.0, "e2e partial"));
    let zero_backoff = analytic_single_sender_delay(
        &MacParams {
            p_error: 0.0,
            ..mac.clone()
        },
        1,
    )
    .unwrap();
    c.push(check(close(zero_backoff, 463.0 + 1.0 / 3.0), format!("w0=1 delay {zero_backoff}")));

    // velocity and position update
    let v = velocity_step(0.8, 5.0, 1.5, 0.5, 20.0, 1.5, 0.5, 25.0, 30.0, 10.0);
    c.push(check(close(v, -7.25), format!("velocity example {v}")));
    let p = Particle {
        position: vec![30.0 + v],
        velocity: vec![v],
        pbest: None,
    };
    c.push(check(p.combination(1, 64).0 == vec![23], "rounded position 23"));
    let v = velocity_step(1.0, 14.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0);
    c.push(check(v == 10.0, "velocity clamp +14 -> +10"));
    let v = velocity_step(0.8, 0.0, 1.5, 0.3, 17.0, 1.5, 0.9, 17.0, 17.0, 10.0);
    c.push(check(v == 0.0, "fixed point"));

    // best replacement: first iteration, strict improvement, tie keeps incumbent
    let params = SwarmParams {
        m: 3,
        ..SwarmParams::default()
    };
    let mut state = init_swarm(2, &params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let combos = state.combinations();
    update_bests(&mut state, &[4.0, 9.0, 2.0], vec![vec![0.0; 2]; 3]).unwrap();
    let g = state.gbest.clone().unwrap();
    c.push(check(g.cw == combos[2] && g.value == 2.0, "t=1 gbest is particle 3"));
    c.push(check(
        state
            .particles
            .iter()
            .zip(&combos)
            .all(|(p, cw)| p.pbest.as_ref().unwrap().cw == *cw),
        "t=1 pbest is own position",
    ));
    state.t = 2;
    state.particles[0].position = vec![50.0, 50.0];
    update_bests(&mut state, &[2.0, 9.0, 9.0], vec![vec![0.0; 2]; 3]).unwrap();
    c.push(check(state.gbest.as_ref().unwrap().cw == combos[2], "tie keeps incumbent gbest"));
    state.particles[1].position = vec![40.0, 40.0];
    update_bests(&mut state, &[9.0, 1.0, 9.0], vec![vec![0.0; 2]; 3]).unwrap();
    c.push(check(
        state.gbest.as_ref().unwrap().cw == CwCombination(vec![40, 40]),
        "strict improvement replaces gbest",
    ));
    c
}

fn criterion_2() -> Vec<(bool, String)> {
    let mut c = Vec::new();
    for p_error in [0.0, 0.1] {
        for w0 in [8u32, 16, 64] {
            let mac = MacParams {
                p_error,
                ..MacParams::default()
            };
            let mut cfg = SimConfig::new(mac.clone(), Topology::new(2, 0.5).unwrap(), 10.0e6, 20 + w0 as u64);
            cfg.active_mask = Some(vec![true, false]);
            let out = run_simulation(&cfg, &CwCombination(vec![w0, 64])).unwrap();
            let sim = one_hop_delay(&out.per_node[0]).unwrap();
            let exact = analytic_single_sender_delay(&mac, w0).unwrap();
            let rel = (sim - exact).abs() / exact;
            c.push(check(
                rel <= SINGLE_SENDER_TOL,
                format!("p_e={p_error} w0={w0}: sim {sim:.1} vs {exact:.1} us ({:.2}%)", 100.0 * rel),
            ));
        }
    }
    c
}

fn load_result(dir: &Path) -> OptimizationResult {
    serde_json::from_slice(&std::fs::read(dir.join("result.json")).unwrap()).unwrap()
}

fn criterion_4(r: &OptimizationResult) -> Vec<(bool, String)> {
    let mut c = Vec::new();
    for (step, trace) in [("A", &r.step_a_trace), ("B", &r.step_b_trace)] {
        let monotone = trace.windows(2).all(|w| w[1].gbest_value <= w[0].gbest_value);
        c.push(check(monotone, format!("step {step} gbest trace non-increasing")));
        let vmax = trace.iter().map(|t| t.max_abs_velocity).fold(0.0, f64::max);
        c.push(check(vmax <= DCW_MAX, format!("step {step} max |velocity| {vmax}")));
        let lo = trace.iter().map(|t| t.min_evaluated_cw).min().unwrap();
        let hi = trace.iter().map(|t| t.max_evaluated_cw).max().unwrap();
        c.push(check(lo >= 1 && hi <= 64, format!("step {step} evaluated CW range [{lo}, {hi}]")));
    }
    c
}

fn criterion_5() -> Vec<(bool, String)> {
    let mut cfg = SimConfig::new(MacParams::default(), Topology::new(4, 0.5).unwrap(), 5.0e5, 1);
    cfg.warmup_us = 1.0e6;
    let eval = SimEvaluator::new(cfg, 3).unwrap();
    let target = choose_d_avg(&eval, &[4, 8, 16, 32, 64], 0.8).unwrap();
    let grid = grid_search(&GridSpec::uniform(4, &[8, 16, 32, 64], target), &eval).unwrap();
    let params = SwarmParams {
        iter_limit: 60,
        ..SwarmParams::default()
    };
    let swarm = step_a(4, target, &eval, &params, 1).unwrap().swarm;
    let ratio = swarm.best.value / grid.best.objective;
    vec![
        check(grid.entries.len() == 256, format!("grid size {}", grid.entries.len())),
        check(
            ratio <= GRID_RATIO_LIMIT,
            format!(
                "swarm {} f={:.4e} vs grid {} f={:.4e}, ratio {ratio:.4}",
                swarm.best.cw, swarm.best.value, grid.best.cw, grid.best.objective
            ),
        ),
    ]
}

fn criteria_6_to_9(r: &OptimizationResult) -> [Vec<(bool, String)>; 4] {
    let (o, b) = (&r.optimized_report, &r.baseline_report);
    let cv = coefficient_of_variation(&o.delays_us);
    let mean_ms = o.avg_delay_us / 1e3;
    let c6 = vec![
        check(cv <= CV_LIMIT, format!("optimized delay CV {cv:.4}")),
        check(
            (MEAN_DELAY_RANGE_MS.0..=MEAN_DELAY_RANGE_MS.1).contains(&mean_ms),
            format!("optimized mean {mean_ms:.3} ms"),
        ),
        check(
            o.avg_delay_us <= b.avg_delay_us,
            format!("optimized mean {:.1} vs baseline {:.1} us", o.avg_delay_us, b.avg_delay_us),
        ),
    ];

    let (eo, eb) = (o.e2e_last_us(), b.e2e_last_us());
    let inc: Vec<f64> = o.e2e_us.windows(2).map(|w| w[1] - w[0]).collect();
    let m = mean(&inc);
    let worst = inc.iter().map(|x| (x - m).abs() / m).fold(0.0, f64::max);
    let c7 = vec![
        check(eo < eb, format!("e2e optimized {:.2} ms vs baseline {:.2} ms", eo / 1e3, eb / 1e3)),
        check(worst <= INCREMENT_TOL, format!("worst e2e increment deviation {:.1}%", 100.0 * worst)),
    ];

    let mut c8 = Vec::new();
    for i in 0..r.n {
        let (to, tb) = (o.throughput_bps[i], b.throughput_bps[i]);
        c8.push(check(
            to >= THROUGHPUT_RATIO * tb,
            format!("node {} throughput {:.3} vs baseline {:.3} Mbps", i + 1, to / 1e6, tb / 1e6),
        ));
        let (po, pb) = (o.tx_probability[i], b.tx_probability[i]);
        c8.push(check(po > pb, format!("node {} tau {po:.4} vs baseline {pb:.4}", i + 1)));
    }

    let c9 = vec![check(
        r.optimal_cw.0.iter().all(|&w| w < 64),
        format!("optimal CW {}", r.optimal_cw),
    )];
    [c6, c7, c8, c9]
}

fn criterion_10(dir: &Path) -> Vec<(bool, String)> {
    let sweep: SweepReport = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    let ns: Vec<usize> = sweep.rows.iter().map(|r| r.n).collect();
    let e2e: Vec<f64> = sweep.rows.iter().map(|r| r.baseline_e2e_us).collect();
    let increasing = e2e.windows(2).all(|w| w[1] > w[0]);
    let table = std::fs::read_to_string(dir.join("table2.csv")).unwrap();
    let with_reference = sweep.rows.iter().filter(|r| r.reference_cw.is_some()).count();
    vec![
        check(ns == (4..=24).step_by(2).collect::<Vec<_>>(), format!("rows {ns:?}")),
        check(increasing, format!("baseline e2e (ms) {:?}", e2e.iter().map(|x| (x / 1e2).round() / 10.0).collect::<Vec<_>>())),
        check(table.lines().count() == 12, "table2.csv has 11 rows"),
        check(with_reference == 11, format!("{with_reference} rows carry a reference vector")),
    ]
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = |name: &str| -> PathBuf { tmp.path().join(name) };
    let s = |p: &PathBuf| p.to_str().unwrap().to_owned();
    let mut report = Report { lines: Vec::new() };

    let t = Instant::now();
    let c1 = equation_suite();
    report.record(1, "equation suite", c1, t.elapsed());

    let t = Instant::now();
    report.record(2, "single-sender oracle", criterion_2(), t.elapsed());

    let t = Instant::now();
    let mut c3 = Vec::new();
    let runs: [(&str, Vec<&str>); 3] = [
        ("simulate", vec!["simulate", "--profile", "fast", "--cw", "64,64,64,64,64,64"]),
        ("optimize", vec!["optimize", "--profile", "fast"]),
        ("sweep", vec!["sweep", "--profile", "fast", "--n-list", "4,6"]),
    ];
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for jobs in ["1", "3"] {
            let dir = out(&format!("{name}-j{jobs}"));
            let mut full = vec!["--jobs", jobs];
            full.extend(args.iter().copied());
            let d = s(&dir);
            full.extend(["--out", d.as_str()]);
            platoon(&full);
            outputs.push(read_dir_files(&dir));
        }
        c3.push(check(
            outputs[0] == outputs[1] && !outputs[0].is_empty(),
            format!("{name}: {} files identical across --jobs 1/3", outputs[0].len()),
        ));
    }
    report.record(3, "determinism across --jobs", c3, t.elapsed());

    let t = Instant::now();
    let fast = load_result(&out("optimize-j1"));
    report.record(4, "swarm monotonicity and bounds", criterion_4(&fast), t.elapsed());

    let t = Instant::now();
    report.record(5, "swarm vs exhaustive grid", criterion_5(), t.elapsed());

    let t = Instant::now();
    let dir = out("optimize-full");
    platoon(&["optimize", "--profile", "full", "--out", &s(&dir)]);
    let full = load_result(&dir);
    let elapsed = t.elapsed();
    let [c6, c7, c8, c9] = criteria_6_to_9(&full);
    report.record(6, "balanced one-hop delay", c6, elapsed);
    report.record(7, "end-to-end delay", c7, elapsed);
    report.record(8, "throughput and transmission probability ordering", c8, elapsed);
    report.record(9, "optimal windows below standard", c9, elapsed);

    let t = Instant::now();
    let dir = out("sweep-fast");
    platoon(&["sweep", "--profile", "fast", "--n-list", "4..24", "--out", &s(&dir)]);
    report.record(10, "sweep shape and report", criterion_10(&dir), t.elapsed());

    let failed: Vec<&String> = report.lines.iter().filter(|(_, ok, _)| !ok).map(|(_, _, l)| l).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("\n"));
}
