//! (k, z)-median and (k, z)-means through truncated costs: the supremum
//! reformulation of the outlier objective, its restriction to a grid of
//! thresholds, and the distributed coreset pipeline built on them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coreset::{build_coreset_distributed, build_lgrid, Coreset, CoresetConfig, CoresetSize};
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    cost_with_outliers, distances_to_centers, pairwise_extent, trimmed_radius, ClusteringSolution, Metric, Point,
    SumObjective, WeightedPointSet,
};
use crate::lloyd::{kmeanspp, trimmed_lloyd, LloydConfig};
use crate::minmax::{solve_with_budget_search, MinMaxDataset, MinMaxInstance};
use crate::partition::Partition;
use crate::rng::{derive_seed, seeded};
use crate::simnet::{CommLedger, CostingRule};

/// Where the supremum over thresholds `L` is taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupMode<'a> {
    /// All real `L >= 0`; attained at a weighted order statistic.
    Real,
    /// Only the given thresholds.
    Grid(&'a [f64]),
}

/// `Σ w·min(d, L)^ℓ − z'·L^ℓ` over `(distance, weight)` pairs.
fn truncated_gap(d: &[(f64, f64)], l: f64, z_prime: f64, objective: SumObjective) -> f64 {
    let lp = objective.power(l);
    d.iter().map(|&(x, w)| w * objective.power(x.min(l))).sum::<f64>() - z_prime * lp
}

/// `sup_L (Σ w·d_L^ℓ(p, C) − z'·L^ℓ)` with the supremum taken as in `mode`.
pub fn cost_truncated_sup(
    set: &WeightedPointSet,
    centers: &[Point],
    z_prime: f64,
    objective: SumObjective,
    mode: SupMode<'_>,
    metric: &Metric,
) -> Result<f64> {
    let total = set.total_weight();
    if !(z_prime >= 0.0) || z_prime >= total {
        return Err(Error::OutlierBudget { z: z_prime, n: total });
    }
    let mut d = distances_to_centers(set, centers, metric)?;
    match mode {
        SupMode::Real => {
            let l_bar = trimmed_radius(&mut d, z_prime);
            Ok(truncated_gap(&d, l_bar, z_prime, objective))
        }
        SupMode::Grid(grid) => Ok(grid_sup(&mut d, grid, z_prime, objective)),
    }
}

/// Threshold at which the real supremum is attained: the first distance, going
/// down from the largest, at which the weight seen so far exceeds `z'`.
pub fn sup_achiever(set: &WeightedPointSet, centers: &[Point], z_prime: f64, metric: &Metric) -> Result<f64> {
    let mut d = distances_to_centers(set, centers, metric)?;
    Ok(trimmed_radius(&mut d, z_prime))
}

/// The truncated gap at one threshold.
pub fn truncated_gap_at(
    set: &WeightedPointSet,
    centers: &[Point],
    l: f64,
    z_prime: f64,
    objective: SumObjective,
    metric: &Metric,
) -> Result<f64> {
    let d = distances_to_centers(set, centers, metric)?;
    Ok(truncated_gap(&d, l, z_prime, objective))
}

fn grid_sup(d: &mut [(f64, f64)], grid: &[f64], z_prime: f64, objective: SumObjective) -> f64 {
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pow_prefix = Vec::with_capacity(d.len() + 1);
    let mut w_prefix = Vec::with_capacity(d.len() + 1);
    pow_prefix.push(0.0);
    w_prefix.push(0.0);
    for &(x, w) in d.iter() {
        pow_prefix.push(pow_prefix.last().unwrap() + w * objective.power(x));
        w_prefix.push(w_prefix.last().unwrap() + w);
    }
    let total = *w_prefix.last().unwrap();
    grid.iter()
        .map(|&l| {
            let idx = d.partition_point(|&(x, _)| x <= l);
            let lp = objective.power(l);
            pow_prefix[idx] + (total - w_prefix[idx]) * lp - z_prime * lp
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Both sides of `cost_{(1+ε)^ℓ z'}(C) <= (1+ε)^ℓ · cost'_{z'}(C)`, where `cost'`
/// is the grid supremum.
pub fn grid_chain_sides(
    set: &WeightedPointSet,
    centers: &[Point],
    z_prime: f64,
    objective: SumObjective,
    eps: f64,
    grid: &[f64],
    metric: &Metric,
) -> Result<(f64, f64)> {
    let factor = (1.0 + eps).powi(objective.exponent());
    let lhs = cost_with_outliers(set, centers, factor * z_prime, objective, metric)?;
    let rhs = factor * cost_truncated_sup(set, centers, z_prime, objective, SupMode::Grid(grid), metric)?;
    Ok((lhs, rhs))
}

/// Whether the grid chain inequality holds (up to rounding).
pub fn verify_grid_chain(
    set: &WeightedPointSet,
    centers: &[Point],
    z_prime: f64,
    objective: SumObjective,
    eps: f64,
    grid: &[f64],
    metric: &Metric,
) -> Result<bool> {
    let (lhs, rhs) = grid_chain_sides(set, centers, z_prime, objective, eps, grid, metric)?;
    Ok(lhs <= rhs + 1e-9 * rhs.abs().max(lhs.abs()))
}

/// Coordinator objective over one coreset per grid threshold:
/// `max_L ( Σ w·d_L^ℓ(q, C) / (1−ε) − z̃·L^ℓ )`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedObjective {
    pub grid: Vec<f64>,
    pub coresets: Vec<Coreset>,
    pub z_tilde: f64,
    pub objective: SumObjective,
    pub eps: f64,
    pub metric: Metric,
}

impl TruncatedObjective {
    /// `z̃ = (1+ε)²·z / (1−ε)`.
    pub fn z_tilde(z: f64, eps: f64) -> f64 {
        (1.0 + eps).powi(2) * z / (1.0 - eps)
    }

    pub fn datasets(&self) -> Vec<MinMaxDataset> {
        self.grid
            .iter()
            .zip(&self.coresets)
            .map(|(&l, c)| MinMaxDataset {
                set: c.set.clone(),
                metric: self.metric.truncated(l),
                scale: 1.0 / (1.0 - self.eps),
                offset: -self.z_tilde * self.objective.power(l),
            })
            .collect()
    }

    pub fn value(&self, centers: &[Point]) -> f64 {
        self.datasets()
            .par_iter()
            .map(|d| d.cost(centers, self.objective))
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinatorSolver {
    /// Reverse greedy over a geometric budget grid.
    ReverseGreedy { budget_steps: usize },
    /// Seeded k-means++ restarts refined by trimmed Lloyd on the widest coreset.
    LloydMultiStart { restarts: usize },
}

impl Default for CoordinatorSolver {
    fn default() -> Self {
        CoordinatorSolver::ReverseGreedy { budget_steps: 12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub z: usize,
    pub objective: SumObjective,
    pub eps: f64,
    pub size: CoresetSize,
    pub solver: CoordinatorSolver,
    /// Largest candidate pool handed to reverse greedy.
    pub pool_cap: usize,
    pub lloyd: LloydConfig,
    pub rule: CostingRule,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(k: usize, z: usize, objective: SumObjective, eps: f64, dim: usize) -> Self {
        Self {
            k,
            z,
            objective,
            eps,
            size: CoresetSize::Heuristic,
            solver: CoordinatorSolver::default(),
            pool_cap: 256,
            lloyd: LloydConfig::default(),
            rule: CostingRule::for_dim(dim),
            seed: 0,
        }
    }

    /// `(1+ε)^{ℓ+2} / (1−ε) · z`.
    pub fn bicriteria_outliers(&self) -> f64 {
        (1.0 + self.eps).powi(self.objective.exponent() + 2) / (1.0 - self.eps) * self.z as f64
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.bicriteria_outliers() >= n as f64 {
            return Err(Error::OutlierBudget {
                z: self.bicriteria_outliers(),
                n: n as f64,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub centers: Vec<Point>,
    pub objective: SumObjective,
    pub objective_at_z: f64,
    pub objective_at_bicriteria_z: f64,
    pub bicriteria_outliers: f64,
    /// Value of the coordinator's truncated objective at `centers`.
    pub surrogate: f64,
    pub grid: Vec<f64>,
    pub ledger: CommLedger,
}

impl PipelineReport {
    pub fn solution(&self) -> ClusteringSolution {
        ClusteringSolution {
            centers: self.centers.clone(),
            objective: self.objective_at_bicriteria_z,
            outliers_allowed: self.bicriteria_outliers,
            kind: self.objective.kind(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "objective_kind": match self.objective {
                SumObjective::Median => "median",
                SumObjective::Means => "means",
            },
            "centers": self.centers.iter().map(Point::coords).collect::<Vec<_>>(),
            "objective_at_z": self.objective_at_z,
            "objective_at_bicriteria_z": self.objective_at_bicriteria_z,
            "grid_size": self.grid.len(),
            "ledger": self.ledger,
        })
    }
}

/// Builds one coreset per grid threshold across the machines, then solves the
/// truncated min-max objective at the coordinator.
///
/// The global point count and the extreme pairwise distances are treated as
/// known to every party.
pub fn solve_kz_median_means_distributed(partition: &Partition, config: &PipelineConfig) -> Result<PipelineReport> {
    let n = partition.n();
    config.validate(n)?;
    let all = partition.union();
    let (grid, metric) = match pairwise_extent(all.points(), &Metric::Euclidean) {
        Some(e) => (
            build_lgrid(e.d_min, e.d_max, n, config.eps)?,
            Metric::clamped_for(e.d_min, e.d_max, n, config.eps),
        ),
        None => (vec![0.0], Metric::Euclidean),
    };

    let coreset_config = CoresetConfig {
        eps: config.eps,
        k: config.k,
        objective: config.objective,
        size: config.size,
        grid_len: grid.len(),
        lloyd_iters: 10,
        rule: config.rule,
    };
    let built: Vec<(Coreset, CommLedger)> = grid
        .par_iter()
        .enumerate()
        .map(|(j, &l)| build_coreset_distributed(partition, l, &coreset_config, &metric, derive_seed(config.seed, j as u64)))
        .collect::<Result<_>>()?;
    let mut ledger = CommLedger::default();
    let mut coresets = Vec::with_capacity(built.len());
    for (c, l) in built {
        ledger.merge_parallel(&l);
        coresets.push(c);
    }

    let target = TruncatedObjective {
        grid: grid.clone(),
        coresets,
        z_tilde: TruncatedObjective::z_tilde(config.z as f64, config.eps),
        objective: config.objective,
        eps: config.eps,
        metric,
    };
    let centers = solve_coordinator(&target, config)?;

    let z = config.z as f64;
    let objective_at_z = cost_with_outliers(&all, &centers, z, config.objective, &Metric::Euclidean)?;
    let objective_at_bicriteria_z =
        cost_with_outliers(&all, &centers, config.bicriteria_outliers(), config.objective, &Metric::Euclidean)?;
    Ok(PipelineReport {
        surrogate: target.value(&centers),
        centers,
        objective: config.objective,
        objective_at_z,
        objective_at_bicriteria_z,
        bicriteria_outliers: config.bicriteria_outliers(),
        grid,
        ledger,
    })
}

fn distinct_locations(coresets: &[Coreset]) -> WeightedPointSet {
    let mut seen = std::collections::BTreeMap::new();
    for c in coresets {
        for (p, w) in c.set.iter() {
            let key: Vec<u64> = p.coords().iter().map(|x| x.to_bits()).collect();
            seen.entry(key).or_insert((p.clone(), 0.0)).1 += w;
        }
    }
    let (points, weights) = seen.into_values().unzip();
    WeightedPointSet::new(points, weights).expect("coreset weights are positive")
}

fn solve_coordinator(target: &TruncatedObjective, config: &PipelineConfig) -> Result<Vec<Point>> {
    let candidates = distinct_locations(&target.coresets);
    if candidates.len() <= config.k {
        return Ok(candidates.points().to_vec());
    }
    match config.solver {
        CoordinatorSolver::ReverseGreedy { budget_steps } => {
            let pool = candidate_pool(&candidates, config.pool_cap.max(config.k), &target.metric, config.seed)?;
            let instance = MinMaxInstance::new(target.datasets(), config.objective, config.k).with_pool(pool);
            Ok(solve_with_budget_search(&instance, budget_steps)?.best.centers)
        }
        CoordinatorSolver::LloydMultiStart { restarts } => {
            let widest = &target.coresets.last().expect("grid is nonempty").set;
            let trim = if target.z_tilde < widest.total_weight() {
                target.z_tilde
            } else {
                config.z as f64
            };
            let runs: Vec<Result<(f64, Vec<Point>)>> = (0..restarts.max(1))
                .into_par_iter()
                .map(|r| {
                    let mut rng = seeded(derive_seed(config.seed, 0x11_0000 + r as u64));
                    let init = kmeanspp(widest, config.k, config.objective, &target.metric, &mut rng)?;
                    let run = trimmed_lloyd(widest, init, trim, config.objective, &Metric::Euclidean, &config.lloyd)?;
                    Ok((target.value(&run.centers), run.centers))
                })
                .collect();
            let mut best: Option<(f64, Vec<Point>)> = None;
            for run in runs {
                let run = run?;
                if best.as_ref().is_none_or(|b| run.0 < b.0) {
                    best = Some(run);
                }
            }
            Ok(best.expect("at least one restart").1)
        }
    }
}

/// At most `cap` candidate locations from the coreset union, drawn by D² sampling.
fn candidate_pool(candidates: &WeightedPointSet, cap: usize, metric: &Metric, seed: u64) -> Result<Vec<Point>> {
    if candidates.len() <= cap {
        return Ok(candidates.points().to_vec());
    }
    let mut rng = seeded(derive_seed(seed, 0x9001));
    let pts = candidates.points();
    let mut chosen = vec![false; pts.len()];
    let mut pool = Vec::with_capacity(cap);
    let first = WeightedIndex::new(candidates.weights())
        .map_err(|e| invalid(e.to_string()))?
        .sample(&mut rng);
    let mut nearest: Vec<f64> = pts.iter().map(|p| metric.dist(p.coords(), pts[first].coords())).collect();
    chosen[first] = true;
    pool.push(pts[first].clone());
    while pool.len() < cap {
        let mass: Vec<f64> = nearest
            .iter()
            .zip(candidates.weights())
            .zip(&chosen)
            .map(|((&d, &w), &c)| if c { 0.0 } else { w * d * d })
            .collect();
        let Ok(pick) = WeightedIndex::new(&mass) else {
            break;
        };
        let c = pick.sample(&mut rng);
        chosen[c] = true;
        for (d, p) in nearest.iter_mut().zip(pts) {
            *d = d.min(metric.dist(p.coords(), pts[c].coords()));
        }
        pool.push(pts[c].clone());
    }
    Ok(pool)
}
