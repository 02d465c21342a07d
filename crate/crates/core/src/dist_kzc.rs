//! Distributed (k, z)-center: the four-round protocol for one radius guess and
//! the driver that searches a geometric ladder of guesses.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::{Aggregator, SelectionRule};
use crate::error::{invalid, Error, Result};
use crate::geometry::{center_cost_with_outliers, ClusteringSolution, Metric, ObjectiveKind, Point, WeightedPointSet};
use crate::kzc::{kzc, KzcOutcome};
use crate::partition::{even_chunks, Partition};
use crate::rng::{derive_seed, seeded};
use crate::simnet::{CommLedger, CostingRule, Outbox, Payload, PartyId, SimNet, Token};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverMode {
    /// Every machine reports its counts for its whole ladder in the first round.
    #[default]
    Parallel,
    /// The coordinator probes one guess at a time.
    BinarySearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistKzcConfig {
    pub k: usize,
    pub z: usize,
    pub eps: f64,
    pub rule: CostingRule,
    pub metric: Metric,
    pub selection: SelectionRule,
    pub mode: DriverMode,
    /// Shards per machine; `None` keeps the partition as is.
    pub submachine_splits: Option<Vec<usize>>,
    pub seed: u64,
}

impl DistKzcConfig {
    pub fn new(k: usize, z: usize, eps: f64, dim: usize) -> Self {
        Self {
            k,
            z,
            eps,
            rule: CostingRule::for_dim(dim),
            metric: Metric::Euclidean,
            selection: SelectionRule::default(),
            mode: DriverMode::default(),
            submachine_splits: None,
            seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.z >= n {
            return Err(Error::OutlierBudget {
                z: self.z as f64,
                n: n as f64,
            });
        }
        Ok(())
    }

    /// Sparsity threshold `y = εz/(km)` handed to aggregation.
    pub fn sparsity_threshold(&self, machines: usize) -> f64 {
        self.eps * self.z as f64 / (self.k * machines) as f64
    }

    /// Round-2 limit on the total number of aggregated locations.
    pub fn gate_limit(&self, machines: usize) -> f64 {
        (self.k * machines) as f64 * (1.0 + 1.0 / self.eps)
    }

    pub fn bicriteria_outliers(&self) -> f64 {
        (1.0 + self.eps) * self.z as f64
    }

    /// Upper bound on the words one single-guess run may use.
    pub fn single_guess_word_cap(&self, machines: usize) -> f64 {
        2.0 * machines as f64
            + self.gate_limit(machines) * (self.rule.words_per_point + self.rule.words_per_weight) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    /// Too many aggregated locations.
    Gate,
    /// Aggregation discarded more points than the outlier budget allows.
    NegativeBudget,
    /// The coordinator's greedy cover left too much weight uncovered.
    Cover,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Guess {
    No(Rejection),
    Solution {
        centers: Vec<Point>,
        radius_bound: f64,
        z_used: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuessOutcome {
    pub l: f64,
    pub guess: Guess,
    pub ledger: CommLedger,
}

impl GuessOutcome {
    pub fn centers(&self) -> Option<&[Point]> {
        match &self.guess {
            Guess::Solution { centers, .. } => Some(centers),
            Guess::No(_) => None,
        }
    }

    pub fn is_solution(&self) -> bool {
        matches!(self.guess, Guess::Solution { .. })
    }
}

struct SingleMachine {
    agg: Aggregator,
    pending: Option<WeightedPointSet>,
}

fn build_aggregators(partition: &Partition, metric: &Metric) -> Vec<Aggregator> {
    partition
        .parts()
        .par_iter()
        .map(|p| Aggregator::new(p.clone(), metric))
        .collect()
}

/// Runs the four-round protocol for one guess `l`.
pub fn dist_kzc_single(l: f64, config: &DistKzcConfig, partition: &Partition) -> Result<GuessOutcome> {
    let n = partition.n();
    config.validate(n)?;
    if !(l >= 0.0) {
        return Err(invalid(format!("radius guess must be nonnegative, got {l}")));
    }
    let m = partition.machines();
    let y = config.sparsity_threshold(m);
    let states = build_aggregators(partition, &config.metric)
        .into_iter()
        .map(|agg| SingleMachine { agg, pending: None })
        .collect();
    let mut net = SimNet::new(states, config.rule, 4, config.seed);

    net.machine_round(|_, machine, _, out| {
        let summary = machine.agg.run(l, y, config.selection)?.summary;
        out.send_to_coordinator(Payload::Scalar(summary.len() as f64));
        machine.pending = Some(summary);
        Ok(())
    })?;

    let passed = net.coordinator_round(|inbox, out| {
        let total: f64 = inbox.iter().map(|(_, p)| scalar(p)).sum::<Result<f64>>()?;
        if total > config.gate_limit(m) {
            return Ok(false);
        }
        for i in 1..=m {
            out.send(PartyId::Machine(i), Payload::Token(Token::Yes));
        }
        Ok(true)
    })?;
    let finish = |net: SimNet<SingleMachine>, guess| GuessOutcome {
        l,
        guess,
        ledger: net.into_parts().1,
    };
    if !passed {
        return Ok(finish(net, Guess::No(Rejection::Gate)));
    }

    net.machine_round(|_, machine, inbox, out| {
        if inbox.contains(&Payload::Token(Token::Yes)) {
            let summary = machine.pending.take().unwrap_or_default();
            out.send_to_coordinator(Payload::Weighted(summary));
        }
        Ok(())
    })?;

    let guess = net.coordinator_round(|inbox, _| {
        let mut merged = WeightedPointSet::default();
        for (_, payload) in &inbox {
            merged.extend(weighted(payload)?)?;
        }
        cover(config, n, &merged, l)
    })?;
    Ok(finish(net, guess))
}

/// Round-4 step: the greedy cover on the merged summary with radius `5L`.
fn cover(config: &DistKzcConfig, n: usize, merged: &WeightedPointSet, l: f64) -> Result<Guess> {
    let budget = config.bicriteria_outliers() + merged.total_weight() - n as f64;
    if budget < 0.0 {
        return Ok(Guess::No(Rejection::NegativeBudget));
    }
    Ok(match kzc(config.k, budget, merged, 5.0 * l, &config.metric)? {
        KzcOutcome::Centers(centers) => Guess::Solution {
            centers,
            radius_bound: 24.0 * l,
            z_used: config.bicriteria_outliers(),
        },
        KzcOutcome::No => Guess::No(Rejection::Cover),
    })
}

fn scalar(p: &Payload) -> Result<f64> {
    match p {
        Payload::Scalar(v) => Ok(*v),
        other => Err(invalid(format!("expected a scalar, got {other:?}"))),
    }
}

fn weighted(p: &Payload) -> Result<&WeightedPointSet> {
    match p {
        Payload::Weighted(w) => Ok(w),
        other => Err(invalid(format!("expected a weighted set, got {other:?}"))),
    }
}

/// A ladder position: `0` or `(1+ε)^t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rung {
    Zero,
    Pow(i32),
}

impl Rung {
    pub fn value(self, base: f64) -> f64 {
        match self {
            Rung::Zero => 0.0,
            Rung::Pow(t) => base.powi(t),
        }
    }
}

/// Exponents `t` with `lo <= base^t < hi`, or `None` if there are none.
pub fn lattice_span(lo: f64, hi: f64, base: f64) -> Option<(i32, i32)> {
    if !(lo > 0.0 && hi > lo && hi.is_finite() && base > 1.0) {
        return None;
    }
    let t = lattice_ceil(lo, base);
    let u = lattice_ceil(hi, base) - 1;
    (t <= u).then_some((t, u))
}

/// Smallest `t` with `base^t >= x`, for finite `x > 0`.
fn lattice_ceil(x: f64, base: f64) -> i32 {
    let mut t = (x.ln() / base.ln()).round() as i32;
    while base.powi(t) < x {
        t += 1;
    }
    while base.powi(t - 1) >= x {
        t -= 1;
    }
    t
}

/// Per-machine ladders over the lattice of powers of `1+ε`.
///
/// Machine `i` only needs the rungs in `[d_min,i/4, (1+ε)·d_max,i)` plus `0`: below
/// that range every aggregation ball holds only coincident points, and above it
/// every ball holds the whole local set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LLadder {
    pub base: f64,
    /// Inclusive exponent range per machine; `None` when all local points coincide.
    pub spans: Vec<Option<(i32, i32)>>,
}

impl LLadder {
    pub fn for_partition(partition: &Partition, eps: f64, metric: &Metric) -> Self {
        let base = 1.0 + eps;
        let spans = partition
            .parts()
            .par_iter()
            .map(|p| machine_span(p, base, metric))
            .collect();
        Self { base, spans }
    }

    pub fn machine_values(&self, machine: usize) -> Vec<f64> {
        let mut v = vec![0.0];
        if let Some((lo, hi)) = self.spans[machine] {
            v.extend((lo..=hi).map(|t| self.base.powi(t)));
        }
        v
    }

    /// Lowest and highest exponent over all machines.
    pub fn global_span(&self) -> Option<(i32, i32)> {
        let lo = self.spans.iter().flatten().map(|s| s.0).min()?;
        let hi = self.spans.iter().flatten().map(|s| s.1).max()?;
        Some((lo, hi))
    }

    /// `0` followed by every lattice value in the global span; this contains
    /// the union of the machine ladders.
    pub fn global_values(&self) -> Vec<f64> {
        let mut v = vec![0.0];
        if let Some((lo, hi)) = self.global_span() {
            v.extend((lo..=hi).map(|t| self.base.powi(t)));
        }
        v
    }

    /// The rung on machine `machine`'s own ladder that behaves like `rung`.
    pub fn effective(&self, machine: usize, rung: Rung) -> Rung {
        effective(self.spans[machine], rung)
    }
}

fn effective(span: Option<(i32, i32)>, rung: Rung) -> Rung {
    match (span, rung) {
        (None, _) | (_, Rung::Zero) => Rung::Zero,
        (Some((lo, _)), Rung::Pow(t)) if t < lo => Rung::Zero,
        (Some((_, hi)), Rung::Pow(t)) if t > hi => Rung::Pow(hi),
        (_, r) => r,
    }
}

fn machine_span(points: &[Point], base: f64, metric: &Metric) -> Option<(i32, i32)> {
    let ext = crate::geometry::pairwise_extent(points, metric)?;
    lattice_span(ext.d_min / 4.0, base * ext.d_max, base)
}

/// Splits every machine's points into `splits[i]` random shards of near-equal size.
pub fn split_submachines(partition: &Partition, splits: &[usize], seed: u64) -> Result<Partition> {
    if splits.len() != partition.machines() {
        return Err(invalid(format!(
            "{} split counts for {} machines",
            splits.len(),
            partition.machines()
        )));
    }
    let mut parts = Vec::new();
    for (i, (part, &t)) in partition.parts().iter().zip(splits).enumerate() {
        if t == 0 || t > part.len() {
            return Err(invalid(format!(
                "machine {} holds {} points and cannot be split into {t} shards",
                i + 1,
                part.len()
            )));
        }
        let mut shuffled = part.clone();
        if t > 1 {
            shuffled.shuffle(&mut seeded(derive_seed(seed, i as u64)));
        }
        parts.extend(even_chunks(shuffled, t));
    }
    Partition::new(parts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistKzcReport {
    pub l: f64,
    pub centers: Vec<Point>,
    pub radius_bound: f64,
    pub objective_at_z: f64,
    pub objective_at_bicriteria_z: f64,
    pub bicriteria_outliers: f64,
    pub ledger: CommLedger,
    pub mode: DriverMode,
    /// Guesses whose gate count had to be requested from machines.
    pub gate_probes: usize,
    /// Round-4 covers attempted before one succeeded.
    pub cover_attempts: usize,
}

impl DistKzcReport {
    pub fn solution(&self) -> ClusteringSolution {
        ClusteringSolution {
            centers: self.centers.clone(),
            objective: self.objective_at_bicriteria_z,
            outliers_allowed: self.bicriteria_outliers,
            kind: ObjectiveKind::CenterRadius,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "L": self.l,
            "centers": self.centers.iter().map(Point::coords).collect::<Vec<_>>(),
            "radius_bound": self.radius_bound,
            "objective_at_z": self.objective_at_z,
            "objective_at_bicriteria_z": self.objective_at_bicriteria_z,
            "ledger": self.ledger,
        })
    }
}

/// Runs the ladder driver and scores the result on the full point set.
pub fn dist_kzc_full(config: &DistKzcConfig, partition: &Partition) -> Result<DistKzcReport> {
    let split;
    let partition = match &config.submachine_splits {
        Some(t) => {
            split = split_submachines(partition, t, derive_seed(config.seed, 0x5eed))?;
            &split
        }
        None => partition,
    };
    let n = partition.n();
    config.validate(n)?;
    let m = partition.machines();
    let ladder = LLadder::for_partition(partition, config.eps, &config.metric);
    let states: Vec<Machine> = build_aggregators(partition, &config.metric)
        .into_iter()
        .zip(&ladder.spans)
        .map(|(agg, &span)| Machine { agg, span })
        .collect();
    let y = config.sparsity_threshold(m);
    let respond = |_: usize, machine: &mut Machine, inbox: Vec<Payload>, out: &mut Outbox| -> Result<()> {
        for payload in inbox {
            match Request::decode(&payload)? {
                Request::Count(l) => {
                    let count = machine.agg.run(l, y, config.selection)?.summary.len();
                    out.send_to_coordinator(Payload::Scalar(count as f64));
                }
                Request::Summary(l) => {
                    let summary = machine.agg.run(l, y, config.selection)?.summary;
                    out.send_to_coordinator(Payload::Weighted(summary));
                }
            }
        }
        Ok(())
    };

    let mut net = SimNet::new(states, config.rule, usize::MAX, config.seed);
    let base = ladder.base;
    net.machine_round(|_, machine, _, out| {
        let endpoints = machine.span.map_or(Vec::new(), |(lo, hi)| vec![lo as f64, hi as f64]);
        out.send_to_coordinator(Payload::Scalars(endpoints));
        if config.mode == DriverMode::Parallel {
            let mut counts = vec![machine.agg.run(0.0, y, config.selection)?.summary.len() as f64];
            if let Some((lo, hi)) = machine.span {
                for t in lo..=hi {
                    let l = base.powi(t);
                    counts.push(machine.agg.run(l, y, config.selection)?.summary.len() as f64);
                }
            }
            out.send_to_coordinator(Payload::Scalars(counts));
        }
        Ok(())
    })?;

    let mut coord = Coordinator::new(config, n, m, base);
    let chosen = loop {
        if let Some(done) = net.coordinator_round(|inbox, out| coord.step(inbox, out))? {
            break done;
        }
        net.machine_round(respond)?;
    };
    let (_, ledger) = net.into_parts();

    let all = partition.union();
    let objective_at_z = center_cost_with_outliers(&all, &chosen.1, config.z as f64, &config.metric)?;
    let objective_at_bicriteria_z =
        center_cost_with_outliers(&all, &chosen.1, config.bicriteria_outliers(), &config.metric)?;
    Ok(DistKzcReport {
        l: chosen.0,
        centers: chosen.1,
        radius_bound: 24.0 * chosen.0,
        objective_at_z,
        objective_at_bicriteria_z,
        bicriteria_outliers: config.bicriteria_outliers(),
        ledger,
        mode: config.mode,
        gate_probes: coord.probes,
        cover_attempts: coord.covers,
    })
}

struct Machine {
    agg: Aggregator,
    span: Option<(i32, i32)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Request {
    Count(f64),
    Summary(f64),
}

impl Request {
    fn encode(self) -> Payload {
        match self {
            Request::Count(l) => Payload::Scalar(l),
            Request::Summary(l) => Payload::Scalars(vec![l]),
        }
    }

    fn decode(p: &Payload) -> Result<Self> {
        match p {
            Payload::Scalar(l) => Ok(Request::Count(*l)),
            Payload::Scalars(v) if v.len() == 1 => Ok(Request::Summary(v[0])),
            other => Err(invalid(format!("unexpected request {other:?}"))),
        }
    }
}

enum Phase {
    /// Smallest gate-passing index in `(lo, hi]`; `hi` is known to pass.
    Search { lo: isize, hi: usize },
    /// Try the cover at `idx`, moving upward on failure.
    Verify { idx: usize },
}

/// Safety net for the upward scan past the top of the ladder.
const MAX_EXTENSION: usize = 100_000;

struct Coordinator<'c> {
    config: &'c DistKzcConfig,
    n: usize,
    m: usize,
    base: f64,
    spans: Vec<Option<(i32, i32)>>,
    /// First exponent of the ladder above `Zero`; `None` until known.
    start: Option<i32>,
    /// Index of the highest rung covered by some machine's own ladder.
    top: usize,
    counts: BTreeMap<(usize, Rung), usize>,
    summaries: BTreeMap<(usize, Rung), WeightedPointSet>,
    outstanding: Vec<VecDeque<(Rung, bool)>>,
    phase: Option<Phase>,
    probes: usize,
    covers: usize,
}

impl<'c> Coordinator<'c> {
    fn new(config: &'c DistKzcConfig, n: usize, m: usize, base: f64) -> Self {
        Self {
            config,
            n,
            m,
            base,
            spans: Vec::new(),
            start: None,
            top: 0,
            counts: BTreeMap::new(),
            summaries: BTreeMap::new(),
            outstanding: vec![VecDeque::new(); m],
            phase: None,
            probes: 0,
            covers: 0,
        }
    }

    fn step(&mut self, inbox: Vec<(usize, Payload)>, out: &mut Outbox) -> Result<Option<(f64, Vec<Point>)>> {
        if self.phase.is_none() {
            self.absorb_ladders(inbox)?;
        } else {
            self.absorb_replies(inbox)?;
        }
        loop {
            let phase = self.phase.take().expect("phase set");
            match phase {
                Phase::Search { lo, hi } if hi as isize - lo > 1 => {
                    let mid = ((lo + hi as isize) / 2) as usize;
                    match self.gate(mid) {
                        Some(true) => self.phase = Some(Phase::Search { lo, hi: mid }),
                        Some(false) => self.phase = Some(Phase::Search { lo: mid as isize, hi }),
                        None => {
                            self.phase = Some(phase);
                            self.request_counts(mid, out);
                            return Ok(None);
                        }
                    }
                }
                Phase::Search { hi, .. } => self.phase = Some(Phase::Verify { idx: hi }),
                Phase::Verify { idx } => {
                    if idx > self.top + MAX_EXTENSION {
                        return Err(Error::NoLadderSolution);
                    }
                    match self.gate(idx) {
                        None => {
                            self.phase = Some(phase);
                            self.request_counts(idx, out);
                            return Ok(None);
                        }
                        Some(false) => {
                            self.phase = Some(Phase::Verify { idx: idx + 1 });
                            continue;
                        }
                        Some(true) => {}
                    }
                    let rung = self.rung(idx)?;
                    let missing: Vec<(usize, Rung)> = (0..self.m)
                        .map(|i| (i, effective(self.spans[i], rung)))
                        .filter(|key| !self.summaries.contains_key(key))
                        .collect();
                    if !missing.is_empty() {
                        for (i, eff) in missing {
                            self.outstanding[i].push_back((eff, true));
                            out.send(
                                PartyId::Machine(i + 1),
                                Request::Summary(eff.value(self.base)).encode(),
                            );
                        }
                        self.phase = Some(phase);
                        return Ok(None);
                    }
                    let mut merged = WeightedPointSet::default();
                    for i in 0..self.m {
                        merged.extend(&self.summaries[&(i, effective(self.spans[i], rung))])?;
                    }
                    let l = rung.value(self.base);
                    self.covers += 1;
                    if let Guess::Solution { centers, .. } = cover(self.config, self.n, &merged, l)? {
                        return Ok(Some((l, centers)));
                    }
                    if idx >= self.top && self.start.is_none() {
                        self.start = Some(extension_start(&merged, self.base, &self.config.metric));
                    }
                    self.phase = Some(Phase::Verify { idx: idx + 1 });
                }
            }
        }
    }

    fn absorb_ladders(&mut self, inbox: Vec<(usize, Payload)>) -> Result<()> {
        self.spans = vec![None; self.m];
        let mut seen = vec![0usize; self.m];
        for (i, payload) in inbox {
            let Payload::Scalars(v) = payload else {
                return Err(invalid("expected ladder metadata"));
            };
            let machine = i - 1;
            seen[machine] += 1;
            if seen[machine] == 1 {
                if v.len() == 2 {
                    self.spans[machine] = Some((v[0] as i32, v[1] as i32));
                }
                continue;
            }
            self.counts.insert((machine, Rung::Zero), v[0] as usize);
            if let Some((lo, _)) = self.spans[machine] {
                for (j, &c) in v[1..].iter().enumerate() {
                    self.counts.insert((machine, Rung::Pow(lo + j as i32)), c as usize);
                }
            }
        }
        let global_lo = self.spans.iter().flatten().map(|s| s.0).min();
        let global_hi = self.spans.iter().flatten().map(|s| s.1).max();
        if let (Some(lo), Some(hi)) = (global_lo, global_hi) {
            self.start = Some(lo);
            self.top = (hi - lo + 1) as usize;
        }
        self.phase = Some(Phase::Search {
            lo: -1,
            hi: self.top,
        });
        Ok(())
    }

    fn absorb_replies(&mut self, inbox: Vec<(usize, Payload)>) -> Result<()> {
        for (i, payload) in inbox {
            let (rung, is_summary) = self.outstanding[i - 1]
                .pop_front()
                .ok_or_else(|| invalid(format!("unsolicited reply from machine {i}")))?;
            if is_summary {
                self.summaries.insert((i - 1, rung), weighted(&payload)?.clone());
            } else {
                self.counts.insert((i - 1, rung), scalar(&payload)? as usize);
            }
        }
        Ok(())
    }

    fn rung(&self, idx: usize) -> Result<Rung> {
        if idx == 0 {
            return Ok(Rung::Zero);
        }
        let start = self.start.ok_or(Error::NoLadderSolution)?;
        Ok(Rung::Pow(start + idx as i32 - 1))
    }

    fn gate(&self, idx: usize) -> Option<bool> {
        let rung = self.rung(idx).ok()?;
        let mut total = 0usize;
        for i in 0..self.m {
            total += self.counts.get(&(i, effective(self.spans[i], rung)))?;
        }
        Some(total as f64 <= self.config.gate_limit(self.m))
    }

    fn request_counts(&mut self, idx: usize, out: &mut Outbox) {
        let rung = self.rung(idx).expect("gate was undecided, so the rung exists");
        self.probes += 1;
        for i in 0..self.m {
            let eff = effective(self.spans[i], rung);
            if !self.counts.contains_key(&(i, eff)) {
                self.outstanding[i].push_back((eff, false));
                out.send(PartyId::Machine(i + 1), Request::Count(eff.value(self.base)).encode());
            }
        }
    }
}

/// Where to continue the lattice when no machine had a ladder of its own:
/// just below the smallest gap between received locations.
fn extension_start(merged: &WeightedPointSet, base: f64, metric: &Metric) -> i32 {
    let d = crate::geometry::pairwise_extent(merged.points(), metric).map_or(1.0, |e| e.d_min);
    lattice_ceil(d / 8.0, base)
}
