//! Event-driven simulator of saturated DCF on a chain.
//!
//! Time is kept in integer nanoseconds. Every node owns its backoff clock:
//! once its medium (itself plus both neighbors) has been idle for DIFS it
//! counts down one slot at a time and transmits when the counter reaches
//! zero. A neighbor starting to transmit freezes the counter; slots that
//! completed before the freeze are kept.
//!
//! A data frame from `s` to `d` is lost when, at any instant of its
//! airtime, `d` or any other node in range of `d` is on the air (data or
//! ACK). Surviving frames are then subject to an independent channel
//! error. A delivered frame is acknowledged by `d` after SIFS; ACKs
//! themselves are never lost. The sender is busy for data + SIFS + ACK
//! whatever the outcome, then contends again after DIFS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::{frame_durations, us_to_ns, MacParams, NsTiming};
use crate::topology::Topology;

/// One minimum contention window per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CwCombination(pub Vec<u32>);

impl CwCombination {
    pub fn uniform(n: usize, w0: u32) -> Self {
        Self(vec![w0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn check_bounds(&self, n: usize, lo: u32, hi: u32) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::CwLength {
                expected: n,
                got: self.0.len(),
            });
        }
        for (node, &value) in self.0.iter().enumerate() {
            if value < lo || value > hi {
                return Err(Error::CwOutOfBounds {
                    node,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for CwCombination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for CwCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| Error::InvalidParams(format!("bad contention window {t:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mac: MacParams,
    pub topo: Topology,
    pub window_us: f64,
    pub warmup_us: f64,
    pub seed: u64,
    /// Nodes with saturated traffic; `None` means every node.
    pub active_mask: Option<Vec<bool>>,
}

impl SimConfig {
    pub fn new(mac: MacParams, topo: Topology, window_us: f64, seed: u64) -> Self {
        Self {
            mac,
            topo,
            window_us,
            warmup_us: 1.0e6,
            seed,
            active_mask: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mac.validate()?;
        self.topo.validate()?;
        let exchange_us = frame_durations(&self.mac)?.t_success_us;
        if !(self.window_us.is_finite() && self.window_us >= exchange_us) {
            return Err(Error::WindowTooShort {
                window_us: self.window_us,
                exchange_us,
            });
        }
        if !(self.warmup_us.is_finite() && self.warmup_us >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "warmup must be non-negative, got {}",
                self.warmup_us
            )));
        }
        if let Some(mask) = &self.active_mask {
            if mask.len() != self.topo.n {
                return Err(Error::InvalidParams(format!(
                    "active mask has {} entries for {} nodes",
                    mask.len(),
                    self.topo.n
                )));
            }
            if !mask.iter().any(|&b| b) {
                return Err(Error::InvalidParams("active mask is empty".into()));
            }
        }
        Ok(())
    }

    fn is_active(&self, i: usize) -> bool {
        self.active_mask.as_ref().is_none_or(|m| m[i])
    }
}

/// Per-node counters over the measurement window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    /// Measurement time credited to the node (the whole window under
    /// saturation).
    pub busy_window_us: f64,
    /// Cumulative own exchange airtime, for the alternative delay reading.
    pub airtime_us: f64,
    pub successes: u64,
    pub attempts: u64,
    pub collisions: u64,
    pub channel_errors: u64,
    pub drops: u64,
    /// Idle backoff slots the node counted down.
    pub decision_slots: u64,
    pub tx_starts: u64,
}

impl NodeStats {
    /// Pools counters of several independent windows.
    pub fn merge(&mut self, other: &NodeStats) {
        self.busy_window_us += other.busy_window_us;
        self.airtime_us += other.airtime_us;
        self.successes += other.successes;
        self.attempts += other.attempts;
        self.collisions += other.collisions;
        self.channel_errors += other.channel_errors;
        self.drops += other.drops;
        self.decision_slots += other.decision_slots;
        self.tx_starts += other.tx_starts;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub per_node: Vec<NodeStats>,
    pub window_us: f64,
}

impl SimOutcome {
    /// Pools replications into one outcome spanning their summed windows.
    pub fn pooled(outcomes: &[SimOutcome]) -> Option<SimOutcome> {
        let first = outcomes.first()?;
        let mut acc = first.clone();
        for o in &outcomes[1..] {
            assert_eq!(o.per_node.len(), acc.per_node.len());
            for (a, b) in acc.per_node.iter_mut().zip(&o.per_node) {
                a.merge(b);
            }
            acc.window_us += o.window_us;
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    Collision,
    ChannelError,
}

#[derive(Debug, Clone)]
struct Exchange {
    dest: usize,
    start: u64,
    data_end: u64,
    end: u64,
    corrupted: bool,
    outcome: Option<Outcome>,
}

#[derive(Debug, Clone, Copy)]
struct AckTx {
    start: u64,
    end: u64,
    started: bool,
}

struct Node {
    w0: u32,
    active: bool,
    stage: u32,
    counter: u64,
    /// Instant the countdown (re)started, i.e. idle + DIFS. `None` while
    /// the node is busy or deferring.
    resume_at: Option<u64>,
    exch: Option<Exchange>,
    ack: Option<AckTx>,
    rng: ChaCha8Rng,
    stats: NodeStats,
}

impl Node {
    fn on_air(&self, t: u64) -> bool {
        self.exch
            .as_ref()
            .is_some_and(|e| e.start <= t && t < e.data_end)
            || self.ack.is_some_and(|a| a.start <= t && t < a.end)
    }

    fn draw_counter(&mut self, retry_limit: u32) {
        let w = crate::mac::contention_window(self.stage, self.w0, retry_limit)
            .expect("stage bounded by retry limit");
        self.counter = self.rng.gen_range(0..w);
    }
}

/// Runs one replication. Deterministic in `(cfg, cw)`.
pub fn run_simulation(cfg: &SimConfig, cw: &CwCombination) -> Result<SimOutcome> {
    cfg.validate()?;
    cw.check_bounds(cfg.topo.n, cfg.mac.cw_lo, cfg.mac.cw_hi)?;
    let timing = NsTiming::from_params(&cfg.mac)?;
    Engine::new(cfg, cw, timing).run()
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    timing: NsTiming,
    nodes: Vec<Node>,
    warmup: u64,
    end: u64,
    pending_acks: Vec<(usize, u64)>,
    starters: Vec<usize>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, cw: &CwCombination, timing: NsTiming) -> Self {
        let nodes = (0..cfg.topo.n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                let mut node = Node {
                    w0: cw.0[i],
                    active: cfg.is_active(i),
                    stage: 0,
                    counter: 0,
                    resume_at: None,
                    exch: None,
                    ack: None,
                    rng,
                    stats: NodeStats::default(),
                };
                if node.active {
                    node.draw_counter(cfg.mac.retry_limit);
                    node.resume_at = Some(timing.difs);
                }
                node
            })
            .collect();
        let warmup = us_to_ns(cfg.warmup_us);
        Self {
            cfg,
            timing,
            nodes,
            warmup,
            end: warmup + us_to_ns(cfg.window_us),
            pending_acks: Vec::new(),
            starters: Vec::new(),
        }
    }

    fn next_event(&self) -> u64 {
        let slot = self.timing.slot;
        let mut next = u64::MAX;
        for node in &self.nodes {
            if let Some(e) = &node.exch {
                if e.outcome.is_none() {
                    next = next.min(e.data_end);
                }
                next = next.min(e.end);
            }
            if let Some(a) = node.ack {
                next = next.min(if a.started { a.end } else { a.start });
            }
            if let Some(r) = node.resume_at {
                next = next.min(r + node.counter * slot);
            }
        }
        next
    }

    fn run(mut self) -> Result<SimOutcome> {
        loop {
            let t = self.next_event();
            if t >= self.end {
                break;
            }
            self.finish_events(t);
            if self.start_events(t) {
                self.mark_collisions(t);
            }
            self.update_contention(t);
        }
        let window_us = self.cfg.window_us;
        let per_node = self
            .nodes
            .into_iter()
            .map(|mut n| {
                n.stats.busy_window_us = window_us;
                n.stats
            })
            .collect();
        Ok(SimOutcome {
            per_node,
            window_us,
        })
    }

    /// Data ends, ACK ends and exchange completions at `t`.
    fn finish_events(&mut self, t: u64) {
        let p_error = self.cfg.mac.p_error;
        let retry_limit = self.cfg.mac.retry_limit;
        let measuring = t >= self.warmup;
        let airtime_us = self.timing.exchange() as f64 / 1e3;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if let Some(e) = node.exch.as_mut() {
                if e.outcome.is_none() && e.data_end == t {
                    let outcome = if e.corrupted {
                        Outcome::Collision
                    } else if p_error > 0.0 && node.rng.gen_bool(p_error) {
                        Outcome::ChannelError
                    } else {
                        Outcome::Success
                    };
                    e.outcome = Some(outcome);
                    if outcome == Outcome::Success {
                        self.pending_acks.push((e.dest, t));
                    }
                }
            }
            if node.ack.is_some_and(|a| a.started && a.end == t) {
                node.ack = None;
            }
            if node.exch.as_ref().is_some_and(|e| e.end == t) {
                let e = node.exch.take().expect("checked");
                let outcome = e.outcome.expect("data resolves before exchange end");
                if measuring {
                    let s = &mut node.stats;
                    s.attempts += 1;
                    s.tx_starts += 1;
                    s.airtime_us += airtime_us;
                    match outcome {
                        Outcome::Success => s.successes += 1,
                        Outcome::Collision => s.collisions += 1,
                        Outcome::ChannelError => s.channel_errors += 1,
                    }
                }
                if outcome == Outcome::Success {
                    node.stage = 0;
                } else if node.stage >= retry_limit {
                    node.stage = 0;
                    if measuring {
                        node.stats.drops += 1;
                    }
                } else {
                    node.stage += 1;
                }
                node.draw_counter(retry_limit);
                debug_assert!(node.resume_at.is_none(), "node {i} contended mid-exchange");
            }
        }
        for (d, at) in self.pending_acks.drain(..) {
            let node = &mut self.nodes[d];
            debug_assert!(node.ack.is_none(), "node {d} owes two ACKs");
            node.ack = Some(AckTx {
                start: at + self.timing.sifs,
                end: at + self.timing.sifs + self.timing.ack,
                started: false,
            });
        }
    }

    /// ACK and data starts at `t`. Returns whether anything went on air.
    fn start_events(&mut self, t: u64) -> bool {
        let mut started = false;
        for node in &mut self.nodes {
            if let Some(a) = node.ack.as_mut() {
                if !a.started && a.start == t {
                    a.started = true;
                    started = true;
                }
            }
        }

        let slot = self.timing.slot;
        self.starters.clear();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(r) = node.resume_at {
                if r + node.counter * slot == t {
                    self.starters.push(i);
                }
            }
        }
        let measuring = t >= self.warmup;
        for k in 0..self.starters.len() {
            let i = self.starters[k];
            let dest = self
                .cfg
                .topo
                .sample_destination(i, &mut self.nodes[i].rng)
                .expect("validated topology");
            let node = &mut self.nodes[i];
            if measuring {
                node.stats.decision_slots += node.counter;
            }
            node.counter = 0;
            node.resume_at = None;
            node.exch = Some(Exchange {
                dest,
                start: t,
                data_end: t + self.timing.data,
                end: t + self.timing.exchange(),
                corrupted: false,
                outcome: None,
            });
            started = true;
        }
        started
    }

    /// Flags every in-flight data frame whose receiver currently hears
    /// someone other than the sender, or is itself on the air.
    fn mark_collisions(&mut self, t: u64) {
        let topo = &self.cfg.topo;
        for s in 0..self.nodes.len() {
            let Some(e) = self.nodes[s].exch.as_ref() else {
                continue;
            };
            if e.corrupted || e.outcome.is_some() || t < e.start || t >= e.data_end {
                continue;
            }
            let d = e.dest;
            let hit = self.nodes[d].on_air(t)
                || topo
                    .sense(d)
                    .iter()
                    .any(|x| x != s && self.nodes[x].on_air(t));
            if hit {
                self.nodes[s].exch.as_mut().expect("checked").corrupted = true;
            }
        }
    }

    /// Freezes nodes that just became busy and arms DIFS for nodes whose
    /// medium just went idle.
    fn update_contention(&mut self, t: u64) {
        let topo = &self.cfg.topo;
        let slot = self.timing.slot;
        let difs = self.timing.difs;
        let measuring = t >= self.warmup;
        for i in 0..self.nodes.len() {
            if !self.nodes[i].active {
                continue;
            }
            let busy = {
                let node = &self.nodes[i];
                node.exch.is_some()
                    || node.ack.is_some()
                    || topo.sense(i).iter().any(|x| self.nodes[x].on_air(t))
            };
            let node = &mut self.nodes[i];
            match (node.resume_at, busy) {
                (Some(r), true) => {
                    let elapsed = if t > r { (t - r) / slot } else { 0 };
                    debug_assert!(elapsed < node.counter || node.counter == 0);
                    let elapsed = elapsed.min(node.counter);
                    node.counter -= elapsed;
                    if measuring {
                        node.stats.decision_slots += elapsed;
                    }
                    node.resume_at = None;
                }
                (None, false) => node.resume_at = Some(t + difs),
                _ => {}
            }
        }
    }
}

/// Derives the seed of replication `rep` from a master seed.
pub fn replication_seed(master: u64, rep: u32) -> u64 {
    // splitmix64 finalizer over (master, rep)
    let mut z = master ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, p_error: f64, window_us: f64, seed: u64) -> SimConfig {
        SimConfig::new(
            MacParams {
                p_error,
                ..MacParams::default()
            },
            Topology::new(n, 0.5).unwrap(),
            window_us,
            seed,
        )
    }

    #[test]
    fn single_sender_never_collides() {
        let mut c = cfg(2, 0.0, 2.0e6, 11);
        c.active_mask = Some(vec![true, false]);
        let out = run_simulation(&c, &CwCombination(vec![16, 64])).unwrap();
        let s = &out.per_node[0];
        assert_eq!(s.collisions, 0);
        assert_eq!(s.drops, 0);
        assert_eq!(s.successes, s.attempts);
        assert_eq!(out.per_node[1].attempts, 0);
    }

    #[test]
    fn w0_one_sender_has_no_backoff() {
        let mut c = cfg(2, 0.0, 1.0e6, 1);
        c.active_mask = Some(vec![true, false]);
        let out = run_simulation(&c, &CwCombination(vec![1, 1])).unwrap();
        let s = &out.per_node[0];
        assert_eq!(s.decision_slots, 0);
        // 463.333 us per packet, back to back
        let expect = (1.0e6 / 463.333) as u64;
        assert!(s.successes.abs_diff(expect) <= 1, "{}", s.successes);
    }

    #[test]
    fn counters_are_conserved() {
        let c = cfg(6, 0.1, 1.0e6, 5);
        let out = run_simulation(&c, &CwCombination(vec![8, 64, 3, 20, 1, 40])).unwrap();
        for s in &out.per_node {
            assert_eq!(s.attempts, s.successes + s.collisions + s.channel_errors);
            assert_eq!(s.tx_starts, s.attempts);
            assert!(s.drops <= s.attempts);
            assert!(s.successes > 0);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let c = cfg(5, 0.1, 5.0e5, 99);
        let cw = CwCombination(vec![30, 12, 50, 7, 64]);
        assert_eq!(run_simulation(&c, &cw).unwrap(), run_simulation(&c, &cw).unwrap());
        let other = SimConfig { seed: 100, ..c };
        assert_ne!(run_simulation(&other, &cw).unwrap(), run_simulation(&SimConfig { seed: 99, ..other.clone() }, &cw).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg(3, 0.1, 1.0e6, 0);
        assert_eq!(
            run_simulation(&c, &CwCombination(vec![16, 16])),
            Err(Error::CwLength {
                expected: 3,
                got: 2
            })
        );
        assert!(matches!(
            run_simulation(&c, &CwCombination(vec![16, 65, 16])),
            Err(Error::CwOutOfBounds { node: 1, .. })
        ));
        let short = cfg(3, 0.1, 100.0, 0);
        assert!(matches!(
            run_simulation(&short, &CwCombination(vec![16; 3])),
            Err(Error::WindowTooShort { .. })
        ));
        let mut none = cfg(3, 0.1, 1.0e6, 0);
        none.active_mask = Some(vec![false; 3]);
        assert!(run_simulation(&none, &CwCombination(vec![16; 3])).is_err());
    }

    #[test]
    fn cw_parsing() {
        let cw: CwCombination = "64,64, 3 9".parse().unwrap();
        assert_eq!(cw.0, vec![64, 64, 3, 9]);
        assert!("6x".parse::<CwCombination>().is_err());
        assert_eq!(cw.to_string(), "64 64 3 9");
    }

    #[test]
    fn replication_seeds_differ() {
        let a: Vec<u64> = (0..4).map(|r| replication_seed(7, r)).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(a[i], a[j]);
            }
        }
    }
}
