//! Distributed importance-sampling coresets under a truncated metric, and the
//! grid of truncation thresholds they are built for.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Metric, Point, PointId, SumObjective, WeightedPointSet};
use crate::lloyd::{kmeanspp, trimmed_lloyd, LloydConfig};
use crate::partition::Partition;
use crate::rng::{derive_seed, seeded, Rng};
use crate::simnet::{CommLedger, CostingRule, Payload, PartyId, SimNet};

/// `{0}` plus the powers of `1+ε` in `(ε·d_min / (2(1+ε)n), 2·d_max]`.
pub fn build_lgrid(d_min: f64, d_max: f64, n: usize, eps: f64) -> Result<Vec<f64>> {
    if !(d_min > 0.0 && d_max >= d_min && d_max.is_finite()) {
        return Err(invalid(format!("need 0 < d_min <= d_max, got {d_min}, {d_max}")));
    }
    if !(eps > 0.0) || n == 0 {
        return Err(invalid("need eps > 0 and n >= 1"));
    }
    let base = 1.0 + eps;
    let lo = eps * d_min / (2.0 * base * n as f64);
    let hi = 2.0 * d_max;
    let mut t = (lo.ln() / base.ln()).floor() as i32;
    while base.powi(t) > lo {
        t -= 1;
    }
    while base.powi(t) <= lo {
        t += 1;
    }
    let mut grid = vec![0.0];
    while base.powi(t) <= hi {
        grid.push(base.powi(t));
        t += 1;
    }
    Ok(grid)
}

/// The grid for a point set, or `{0}` when all points coincide.
pub fn lgrid_for(points: &[Point], eps: f64, metric: &Metric) -> Result<Vec<f64>> {
    match crate::geometry::pairwise_extent(points, metric) {
        Some(e) => build_lgrid(e.d_min, e.d_max, points.len(), eps),
        None => Ok(vec![0.0]),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoresetSize {
    /// `max(10k, n / (10 m |grid|))` samples.
    Heuristic,
    /// The asymptotic size forms with unit constants, at failure probability `delta`.
    Theoretical { delta: f64 },
    /// An explicit number of samples.
    Samples(usize),
    /// Every point is sent with unit weight.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetConfig {
    pub eps: f64,
    pub k: usize,
    pub objective: SumObjective,
    pub size: CoresetSize,
    /// Number of thresholds the coresets are built for; only the heuristic size uses it.
    pub grid_len: usize,
    pub lloyd_iters: usize,
    pub rule: CostingRule,
}

impl CoresetConfig {
    pub fn new(k: usize, eps: f64, objective: SumObjective, dim: usize) -> Self {
        Self {
            eps,
            k,
            objective,
            size: CoresetSize::Heuristic,
            grid_len: 1,
            lloyd_iters: 10,
            rule: CostingRule::for_dim(dim),
        }
    }

    /// Number of importance samples for `n` points on `m` machines in dimension `dim`.
    pub fn sample_budget(&self, n: usize, m: usize, dim: usize) -> usize {
        let k = self.k as f64;
        let floor = self.k * m;
        match self.size {
            CoresetSize::Heuristic => {
                let share = n as f64 / (10.0 * m as f64 * self.grid_len.max(1) as f64);
                (10.0 * k).max(share).ceil() as usize
            }
            CoresetSize::Theoretical { delta } => {
                let core = k * dim as f64 + (1.0 / delta).ln();
                let t = match self.objective {
                    SumObjective::Median => core / self.eps.powi(2),
                    SumObjective::Means => core / self.eps.powi(4),
                };
                (t.ceil() as usize).max(floor)
            }
            CoresetSize::Samples(t) => t,
            CoresetSize::Exact => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coreset {
    pub l: f64,
    pub n: usize,
    pub seed: u64,
    pub set: WeightedPointSet,
    /// Distinct sampled points sent by each machine.
    pub samples_per_machine: Vec<usize>,
}

impl Coreset {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `# L=..,n=..,seed=..` followed by `x0,..,x{D-1},weight` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# L={},n={},seed={}", self.l, self.n, self.seed)?;
        let dim = self.set.dim().unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (p, weight) in self.set.iter() {
            let mut row: Vec<String> = p.coords().iter().map(f64::to_string).collect();
            row.push(weight.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the rows written by [`Coreset::write_csv`] (ids are renumbered).
    pub fn read_csv_rows<R: Read>(input: R) -> Result<WeightedPointSet> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut set = WeightedPointSet::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .enumerate()
                .map(|(col, v)| {
                    v.trim().parse().map_err(|_| Error::Parse {
                        row: i + 3,
                        col: col + 1,
                        value: v.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            let (weight, coords) = vals.split_last().ok_or(Error::EmptyInput("coreset row"))?;
            set.push(Point::new(i as PointId, coords.to_vec())?, *weight)?;
        }
        Ok(set)
    }
}

/// Ids given to local centers; sampled points keep their own ids.
const CENTER_ID_BASE: PointId = 1 << 63;

struct Local {
    points: Vec<Point>,
    centers: Vec<Point>,
    /// Index of each point's center and its truncated cost.
    owner: Vec<usize>,
    cost: Vec<f64>,
    rng: Rng,
    machine: usize,
}

impl Local {
    fn total_cost(&self) -> f64 {
        self.cost.iter().sum()
    }

    fn positive(&self) -> usize {
        self.cost.iter().filter(|&&c| c > 0.0).count()
    }
}

/// Constant-factor local clustering under the truncated metric: k-means++ seeds,
/// then a few Lloyd steps; whichever has lower truncated cost is kept.
fn local_solution(
    points: &[Point],
    k: usize,
    objective: SumObjective,
    base: &Metric,
    truncated: &Metric,
    iters: usize,
    rng: &mut Rng,
) -> Result<Vec<Point>> {
    let set = WeightedPointSet::unit(points.to_vec());
    let seeds = kmeanspp(&set, k, objective, truncated, rng)?;
    let cost = |centers: &[Point]| -> f64 {
        points
            .iter()
            .map(|p| objective.power(truncated.dist_to_set(p.coords(), centers)))
            .sum()
    };
    if iters == 0 {
        return Ok(seeds);
    }
    let config = LloydConfig {
        max_iters: iters,
        tol: 0.0,
    };
    let refined = trimmed_lloyd(&set, seeds.clone(), 0.0, objective, base, &config)?.centers;
    Ok(if cost(&refined) < cost(&seeds) { refined } else { seeds })
}

fn nearest(p: &Point, centers: &[Point], metric: &Metric) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = metric.dist(p.coords(), c.coords());
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Builds a coreset of the partition's points for the truncated metric
/// `min(metric, l)`.
///
/// Round 1: every machine clusters locally and reports its cost and number of
/// positive-cost points. Round 2: the coordinator splits the sample budget across
/// machines. Round 3: machines send their samples and local centers.
pub fn build_coreset_distributed(
    partition: &Partition,
    l: f64,
    config: &CoresetConfig,
    metric: &Metric,
    seed: u64,
) -> Result<(Coreset, CommLedger)> {
    if !(l >= 0.0) {
        return Err(invalid(format!("threshold must be nonnegative, got {l}")));
    }
    if config.k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let n = partition.n();
    let m = partition.machines();
    if config.size == CoresetSize::Exact {
        return exact_coreset(partition, l, config.rule, seed);
    }
    let t = config.sample_budget(n, m, partition.dim());
    let truncated = metric.truncated(l);
    let objective = config.objective;

    let locals: Vec<Local> = partition
        .parts()
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let mut rng = seeded(derive_seed(seed, i as u64 + 1));
            let centers = local_solution(part, config.k, objective, metric, &truncated, config.lloyd_iters, &mut rng)?;
            let owner: Vec<usize> = part.iter().map(|p| nearest(p, &centers, metric)).collect();
            let cost = part
                .iter()
                .zip(&owner)
                .map(|(p, &j)| objective.power(truncated.dist(p.coords(), centers[j].coords())))
                .collect();
            Ok(Local {
                points: part.clone(),
                centers,
                owner,
                cost,
                rng,
                machine: i,
            })
        })
        .collect::<Result<_>>()?;

    let mut net = SimNet::new(locals, config.rule, 3, seed);
    net.machine_round(|_, local, _, out| {
        out.send_to_coordinator(Payload::Scalars(vec![local.total_cost(), local.positive() as f64]));
        Ok(())
    })?;

    let mut coordinator_rng = seeded(net.coordinator_seed());
    net.coordinator_round(|inbox, out| {
        let reports: Vec<(f64, f64)> = inbox
            .iter()
            .map(|(_, p)| match p {
                Payload::Scalars(v) if v.len() == 2 => Ok((v[0], v[1])),
                other => Err(invalid(format!("unexpected report {other:?}"))),
            })
            .collect::<Result<_>>()?;
        let total: f64 = reports.iter().map(|r| r.0).sum();
        let mass: Vec<f64> = reports
            .iter()
            .map(|&(c, pos)| if total > 0.0 { c + pos * total / n as f64 } else { 0.0 })
            .collect();
        let mass_sum: f64 = mass.iter().sum();
        let alloc = split_samples(t, &mass, &mut coordinator_rng)?;
        for (i, &ti) in alloc.iter().enumerate() {
            out.send(PartyId::Machine(i + 1), Payload::Scalars(vec![ti as f64, total, mass_sum]));
        }
        Ok(())
    })?;

    net.machine_round(|_, local, inbox, out| {
        let Some(Payload::Scalars(v)) = inbox.first() else {
            return Err(invalid("missing sample allocation"));
        };
        let summary = local_summary(local, v[0] as usize, v[1], v[2], t, n)?;
        out.send_to_coordinator(Payload::Weighted(summary));
        Ok(())
    })?;

    let mut merged = WeightedPointSet::default();
    let mut samples_per_machine = vec![0; m];
    for (i, p) in net.collect() {
        let Payload::Weighted(w) = p else {
            return Err(invalid("expected a weighted set"));
        };
        samples_per_machine[i - 1] = w.points().iter().filter(|p| p.id < CENTER_ID_BASE).count();
        merged.extend(&w)?;
    }
    let (_, ledger) = net.into_parts();
    Ok((
        Coreset {
            l,
            n,
            seed,
            set: merge_coincident(merged),
            samples_per_machine,
        },
        ledger,
    ))
}

/// Multinomial split of `t` draws proportional to `mass`.
fn split_samples(t: usize, mass: &[f64], rng: &mut Rng) -> Result<Vec<usize>> {
    let mut left = t as u64;
    let mut rest: f64 = mass.iter().sum();
    let mut out = Vec::with_capacity(mass.len());
    for &g in mass {
        let draw = if left == 0 || rest <= 0.0 || g <= 0.0 {
            0
        } else if g >= rest {
            left
        } else {
            Binomial::new(left, (g / rest).min(1.0))
                .map_err(|e| invalid(e.to_string()))?
                .sample(rng)
        };
        out.push(draw as usize);
        left -= draw;
        rest -= g;
    }
    Ok(out)
}

/// Draws `draws` samples with probability proportional to `cost + total/n` among
/// positive-cost points and attaches the leftover cluster mass to each center.
fn local_summary(
    local: &mut Local,
    draws: usize,
    total: f64,
    mass_sum: f64,
    t: usize,
    n: usize,
) -> Result<WeightedPointSet> {
    let k = local.centers.len();
    let mut sizes = vec![0.0; k];
    let mut zero_cost = vec![0.0; k];
    for (&j, &c) in local.owner.iter().zip(&local.cost) {
        sizes[j] += 1.0;
        if c == 0.0 {
            zero_cost[j] += 1.0;
        }
    }
    let floor = if n > 0 { total / n as f64 } else { 0.0 };
    let mass: Vec<f64> = local.cost.iter().map(|&c| if c > 0.0 { c + floor } else { 0.0 }).collect();
    let mut drawn: BTreeMap<usize, f64> = BTreeMap::new();
    if draws > 0 {
        let pick = WeightedIndex::new(&mass).map_err(|e| invalid(e.to_string()))?;
        for _ in 0..draws {
            let i = pick.sample(&mut local.rng);
            *drawn.entry(i).or_default() += mass_sum / (t as f64 * mass[i]);
        }
    }
    let mut sampled = vec![0.0; k];
    for (&i, &w) in &drawn {
        sampled[local.owner[i]] += w;
    }
    let mut scale = vec![1.0; k];
    let mut center_weight = vec![0.0; k];
    for j in 0..k {
        let leftover = sizes[j] - sampled[j];
        if leftover >= zero_cost[j] {
            center_weight[j] = leftover;
        } else {
            // keep every weight positive: the center carries exactly its
            // coincident points and the samples absorb the rest
            center_weight[j] = zero_cost[j];
            scale[j] = (sizes[j] - zero_cost[j]) / sampled[j];
        }
    }
    let mut out = WeightedPointSet::default();
    for (&i, &w) in &drawn {
        out.push(local.points[i].clone(), w * scale[local.owner[i]])?;
    }
    for (j, c) in local.centers.iter().enumerate() {
        if center_weight[j] > 0.0 {
            let id = CENTER_ID_BASE + (local.machine * k + j) as PointId;
            out.push(Point::new(id, c.coords().to_vec())?, center_weight[j])?;
        }
    }
    Ok(out)
}

fn merge_coincident(set: WeightedPointSet) -> WeightedPointSet {
    let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut points = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (p, w) in set.iter() {
        let key: Vec<u64> = p.coords().iter().map(|x| x.to_bits()).collect();
        match index.get(&key) {
            Some(&slot) => weights[slot] += w,
            None => {
                index.insert(key, points.len());
                points.push(p.clone());
                weights.push(w);
            }
        }
    }
    WeightedPointSet::new(points, weights).expect("weights stay positive")
}

fn exact_coreset(partition: &Partition, l: f64, rule: CostingRule, seed: u64) -> Result<(Coreset, CommLedger)> {
    let m = partition.machines();
    let mut net = SimNet::new(partition.parts().to_vec(), rule, 1, seed);
    net.machine_round(|_, part, _, out| {
        out.send_to_coordinator(Payload::Weighted(WeightedPointSet::unit(part.clone())));
        Ok(())
    })?;
    let mut set = WeightedPointSet::default();
    for (_, p) in net.collect() {
        if let Payload::Weighted(w) = p {
            set.extend(&w)?;
        }
    }
    let (_, ledger) = net.into_parts();
    Ok((
        Coreset {
            l,
            n: partition.n(),
            seed,
            set,
            samples_per_machine: vec![0; m],
        },
        ledger,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{line_points, points_from_rows};
    use crate::partition::Partitioner;
    use rand::Rng as _;
    use rand_distr::Normal;

    #[test]
    fn grid_example() {
        let g = build_lgrid(1.0, 5.0, 3, 1.0).unwrap();
        assert_eq!(g, vec![0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn grid_reaches_d_max_and_handles_wide_eps() {
        let g = build_lgrid(2.0, 2.0, 1, 1.0).unwrap();
        assert_eq!(g, vec![0.0, 1.0, 2.0, 4.0]);
        assert_eq!(build_lgrid(2.0, 2.0, 1, 10.0).unwrap(), vec![0.0, 1.0]);
        assert!(build_lgrid(0.0, 1.0, 3, 1.0).is_err());
        assert_eq!(lgrid_for(&line_points(&[2.0, 2.0]), 0.5, &Metric::Euclidean).unwrap(), vec![0.0]);
    }

    fn exact_cost(points: &[Point], centers: &[Point], metric: &Metric, obj: SumObjective) -> f64 {
        points.iter().map(|p| obj.power(metric.dist_to_set(p.coords(), centers))).sum()
    }

    fn coreset_cost(set: &WeightedPointSet, centers: &[Point], metric: &Metric, obj: SumObjective) -> f64 {
        set.iter().map(|(p, w)| w * obj.power(metric.dist_to_set(p.coords(), centers))).sum()
    }

    fn two_gaussians(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = seeded(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let shift = if i % 2 == 0 { 0.0 } else { 20.0 };
                vec![shift + rng.sample(noise), rng.sample(noise)]
            })
            .collect();
        points_from_rows(&rows).unwrap()
    }

    #[test]
    fn coincident_points_collapse_to_one_entry() {
        let pts = line_points(&[4.0; 12]);
        let part = Partitioner::RoundRobin.split(&pts, 3, 0).unwrap();
        let cfg = CoresetConfig::new(2, 0.3, SumObjective::Means, 1);
        let (c, _) = build_coreset_distributed(&part, 1.0, &cfg, &Metric::Euclidean, 5).unwrap();
        assert_eq!(c.set.len(), 1);
        assert_eq!(c.set.weights(), &[12.0]);
    }

    #[test]
    fn exact_mode_returns_the_input() {
        let pts = line_points(&[0.0, 1.0, 3.0, 7.0]);
        let part = Partition::new(vec![pts.clone()]).unwrap();
        let mut cfg = CoresetConfig::new(1, 0.3, SumObjective::Median, 1);
        cfg.size = CoresetSize::Exact;
        let (c, ledger) = build_coreset_distributed(&part, 2.0, &cfg, &Metric::Euclidean, 0).unwrap();
        assert_eq!(c.set, WeightedPointSet::unit(pts));
        assert_eq!(ledger.total_words, 8);
    }

    #[test]
    fn weights_are_conserved_and_positive() {
        let pts = two_gaussians(600, 3);
        let part = Partitioner::Random.split(&pts, 4, 1).unwrap();
        for obj in [SumObjective::Median, SumObjective::Means] {
            for l in [0.5, 3.0, 100.0] {
                let cfg = CoresetConfig::new(2, 0.3, obj, 2);
                let (c, ledger) = build_coreset_distributed(&part, l, &cfg, &Metric::Euclidean, 9).unwrap();
                assert!((c.set.total_weight() - 600.0).abs() <= 1e-6 * 600.0);
                assert!(c.set.weights().iter().all(|&w| w > 0.0));
                let t = cfg.sample_budget(600, 4, 2);
                assert!(c.set.len() <= t + 4 * 2);
                let cap = (t + 4 * 2) * (cfg.rule.words_per_point + 1) + 5 * 4;
                assert!(ledger.total_words <= cap);
                assert_eq!(ledger.rounds, 3);
            }
        }
    }

    #[test]
    fn builds_are_deterministic() {
        let pts = two_gaussians(200, 4);
        let part = Partitioner::Random.split(&pts, 3, 2).unwrap();
        let cfg = CoresetConfig::new(2, 0.3, SumObjective::Means, 2);
        let a = build_coreset_distributed(&part, 5.0, &cfg, &Metric::Euclidean, 1).unwrap();
        let b = build_coreset_distributed(&part, 5.0, &cfg, &Metric::Euclidean, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_cost_is_close_to_exact() {
        let pts = two_gaussians(300, 8);
        let part = Partitioner::Random.split(&pts, 3, 0).unwrap();
        let mut cfg = CoresetConfig::new(2, 0.3, SumObjective::Median, 2);
        cfg.size = CoresetSize::Samples(40);
        let l = 8.0;
        let trunc = Metric::Euclidean.truncated(l);
        let centers = points_from_rows(&[vec![3.0, 1.0], vec![15.0, -2.0]]).unwrap();
        let exact = exact_cost(&pts, &centers, &trunc, cfg.objective);
        let runs = 300;
        let mean: f64 = (0..runs)
            .map(|s| {
                let (c, _) = build_coreset_distributed(&part, l, &cfg, &Metric::Euclidean, s).unwrap();
                coreset_cost(&c.set, &centers, &trunc, cfg.objective)
            })
            .sum::<f64>()
            / runs as f64;
        assert!((mean / exact - 1.0).abs() < 0.02, "mean {mean} exact {exact}");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let pts = two_gaussians(50, 1);
        let part = Partitioner::RoundRobin.split(&pts, 2, 0).unwrap();
        let cfg = CoresetConfig::new(2, 0.3, SumObjective::Means, 2);
        let (c, _) = build_coreset_distributed(&part, 2.0, &cfg, &Metric::Euclidean, 3).unwrap();
        assert_eq!(Coreset::from_json(&c.to_json().unwrap()).unwrap(), c);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# L=2,n=50,seed=3\nx0,x1,weight\n"));
        let rows = Coreset::read_csv_rows(buf.as_slice()).unwrap();
        assert_eq!(rows.weights(), c.set.weights());
    }
}
