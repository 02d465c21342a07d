//! Reverse greedy with multiplicative weights for choosing `k` centers that
//! minimize the largest cost over several weighted datasets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ClusteringSolution, Metric, Point, SumObjective, WeightedPointSet};

/// One dataset of the min-max objective, scored as `scale · Σ w·d^ℓ(p, C) + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxDataset {
    pub set: WeightedPointSet,
    pub metric: Metric,
    pub scale: f64,
    pub offset: f64,
}

impl MinMaxDataset {
    pub fn plain(set: WeightedPointSet, metric: Metric) -> Self {
        Self {
            set,
            metric,
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn cost(&self, centers: &[Point], objective: SumObjective) -> f64 {
        let sum: f64 = self
            .set
            .iter()
            .map(|(p, w)| w * objective.power(self.metric.dist_to_set(p.coords(), centers)))
            .sum();
        self.scale * sum + self.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxInstance {
    pub datasets: Vec<MinMaxDataset>,
    pub objective: SumObjective,
    pub k: usize,
    /// Candidate center locations.
    pub pool: Vec<Point>,
}

impl MinMaxInstance {
    /// Uses the distinct locations of all datasets as the pool.
    pub fn new(datasets: Vec<MinMaxDataset>, objective: SumObjective, k: usize) -> Self {
        let mut seen = BTreeMap::new();
        for d in &datasets {
            for p in d.set.points() {
                let key: Vec<u64> = p.coords().iter().map(|x| x.to_bits()).collect();
                seen.entry(key).or_insert_with(|| p.clone());
            }
        }
        let pool = seen.into_values().collect();
        Self {
            datasets,
            objective,
            k,
            pool,
        }
    }

    pub fn with_pool(mut self, pool: Vec<Point>) -> Self {
        self.pool = pool;
        self
    }

    /// `max_i cost_i(centers)`.
    pub fn objective_value(&self, centers: &[Point]) -> f64 {
        self.datasets
            .par_iter()
            .map(|d| d.cost(centers, self.objective))
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.pool.len() < self.k {
            return Err(invalid(format!(
                "pool of {} locations cannot supply k = {}",
                self.pool.len(),
                self.k
            )));
        }
        if self.datasets.is_empty() {
            return Err(Error::EmptyInput("datasets"));
        }
        Ok(())
    }
}

/// Per-iteration record of a reverse-greedy run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReverseGreedyTrace {
    /// Pool index removed at each iteration.
    pub removed: Vec<usize>,
    /// Removal cost of the removed location in each dataset.
    pub deltas: Vec<Vec<f64>>,
    /// Natural log of every dataset weight before each iteration, plus the final weights.
    pub log_weights: Vec<Vec<f64>>,
    /// Number of remaining centers before each iteration.
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxSolution {
    pub centers: Vec<Point>,
    /// Positions of `centers` in the pool, ascending.
    pub pool_indices: Vec<usize>,
    pub objective: f64,
    pub budget: f64,
    pub trace: ReverseGreedyTrace,
}

impl MinMaxSolution {
    pub fn solution(&self, objective: SumObjective) -> ClusteringSolution {
        ClusteringSolution {
            centers: self.centers.clone(),
            objective: self.objective,
            outliers_allowed: 0.0,
            kind: objective.kind(),
        }
    }
}

/// Nearest and second-nearest alive pool entries of one dataset point.
#[derive(Clone, Copy, Debug)]
struct Nearest {
    first: usize,
    d1: f64,
    second: usize,
    d2: f64,
}

struct DatasetState {
    /// `dist[p][v]`: distance from point `p` to pool entry `v`.
    dist: Vec<Vec<f64>>,
    near: Vec<Nearest>,
}

fn nearest_two(row: &[f64], alive: &[bool]) -> Nearest {
    let mut n = Nearest {
        first: usize::MAX,
        d1: f64::INFINITY,
        second: usize::MAX,
        d2: f64::INFINITY,
    };
    for (v, &d) in row.iter().enumerate() {
        if !alive[v] {
            continue;
        }
        if d < n.d1 {
            n.second = n.first;
            n.d2 = n.d1;
            n.first = v;
            n.d1 = d;
        } else if d < n.d2 {
            n.second = v;
            n.d2 = d;
        }
    }
    n
}

impl DatasetState {
    fn new(data: &MinMaxDataset, pool: &[Point]) -> Self {
        let dist: Vec<Vec<f64>> = data
            .set
            .points()
            .par_iter()
            .map(|p| pool.iter().map(|v| data.metric.dist(p.coords(), v.coords())).collect())
            .collect();
        let alive = vec![true; pool.len()];
        let near = dist.iter().map(|row| nearest_two(row, &alive)).collect();
        Self { dist, near }
    }
}

/// Shared state of a run, so a budget search can reuse the distance tables.
struct Workspace {
    states: Vec<DatasetState>,
}

impl Workspace {
    fn new(instance: &MinMaxInstance) -> Self {
        Self {
            states: instance
                .datasets
                .iter()
                .map(|d| DatasetState::new(d, &instance.pool))
                .collect(),
        }
    }

    /// `delta[v][i]` for the full pool.
    fn initial_deltas(&self, instance: &MinMaxInstance) -> Vec<Vec<f64>> {
        let n = instance.pool.len();
        let m = instance.datasets.len();
        let mut delta = vec![vec![0.0; m]; n];
        for (i, (state, data)) in self.states.iter().zip(&instance.datasets).enumerate() {
            for (p, &w) in data.set.weights().iter().enumerate() {
                let near = state.near[p];
                if near.second != usize::MAX {
                    delta[near.first][i] += contribution(near, w, data.scale, instance.objective);
                }
            }
        }
        delta
    }

    /// `cost_i({v})` without offsets, for every dataset and pool entry.
    fn single_center_costs(&self, instance: &MinMaxInstance) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .zip(&instance.datasets)
            .map(|(state, data)| {
                let mut cost = vec![0.0; instance.pool.len()];
                for (row, &w) in state.dist.iter().zip(data.set.weights()) {
                    for (c, &d) in cost.iter_mut().zip(row) {
                        *c += data.scale * w * instance.objective.power(d);
                    }
                }
                cost
            })
            .collect()
    }
}

/// Starts from the whole pool and removes one location per iteration: among
/// locations whose removal raises no dataset's cost by more than `budget / 2`,
/// the one with the smallest weighted increase. Each dataset's weight is then
/// multiplied by `(1 + 1/budget)` to the power of its increase.
pub fn reverse_greedy(instance: &MinMaxInstance, budget: f64) -> Result<MinMaxSolution> {
    instance.validate()?;
    let ws = Workspace::new(instance);
    run_reverse_greedy(instance, budget, &ws)
}

fn run_reverse_greedy(instance: &MinMaxInstance, budget: f64, ws: &Workspace) -> Result<MinMaxSolution> {
    if !(budget > 0.0) {
        return Err(invalid(format!("budget must be positive, got {budget}")));
    }
    let n = instance.pool.len();
    let m = instance.datasets.len();
    let objective = instance.objective;
    let mut near: Vec<Vec<Nearest>> = ws.states.iter().map(|s| s.near.clone()).collect();
    let mut delta = ws.initial_deltas(instance);
    let mut alive = vec![true; n];
    let mut log_w = vec![0.0; m];
    let step = (1.0 + 1.0 / budget).ln();
    let mut trace = ReverseGreedyTrace::default();

    for iteration in 1..=n - instance.k {
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rel: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
        let mut best: Option<(usize, f64)> = None;
        for v in (0..n).filter(|&v| alive[v]) {
            if delta[v].iter().any(|&d| d > budget / 2.0) {
                continue;
            }
            let score: f64 = delta[v].iter().zip(&rel).map(|(d, r)| d * r).sum();
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((v, score));
            }
        }
        let Some((v, _)) = best else {
            return Err(Error::Infeasible { budget, iteration });
        };

        trace.sizes.push(n - iteration + 1);
        trace.removed.push(v);
        trace.deltas.push(delta[v].clone());
        trace.log_weights.push(log_w.clone());
        for (l, d) in log_w.iter_mut().zip(&delta[v]) {
            *l += d * step;
        }

        alive[v] = false;
        for (i, (state, data)) in ws.states.iter().zip(&instance.datasets).enumerate() {
            for (p, &w) in data.set.weights().iter().enumerate() {
                let old = near[i][p];
                if old.first != v && old.second != v {
                    continue;
                }
                if old.second != usize::MAX && old.first != v {
                    let c = contribution(old, w, data.scale, objective);
                    delta[old.first][i] -= c;
                }
                let fresh = nearest_two(&state.dist[p], &alive);
                near[i][p] = fresh;
                if fresh.second != usize::MAX {
                    delta[fresh.first][i] += contribution(fresh, w, data.scale, objective);
                }
            }
        }
        delta[v].iter_mut().for_each(|d| *d = 0.0);
        for d in delta.iter_mut().flatten() {
            if *d < 0.0 {
                *d = 0.0;
            }
        }
    }
    trace.log_weights.push(log_w);

    let pool_indices: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    let centers: Vec<Point> = pool_indices.iter().map(|&v| instance.pool[v].clone()).collect();
    Ok(MinMaxSolution {
        objective: instance.objective_value(&centers),
        centers,
        pool_indices,
        budget,
        trace,
    })
}

fn contribution(n: Nearest, weight: f64, scale: f64, objective: SumObjective) -> f64 {
    scale * weight * (objective.power(n.d2) - objective.power(n.d1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSearch {
    pub best: MinMaxSolution,
    /// Every budget tried, with the objective reached or `None` if infeasible.
    pub tried: Vec<(f64, Option<f64>)>,
}

/// Budgets for [`solve_with_budget_search`]: `steps` geometric values from the
/// smallest positive first-iteration removal cost up to twice the largest
/// single-location cost, where every removal is feasible.
pub fn budget_grid(instance: &MinMaxInstance, steps: usize) -> Result<Vec<f64>> {
    instance.validate()?;
    let ws = Workspace::new(instance);
    Ok(budget_grid_with(instance, &ws, steps))
}

fn budget_grid_with(instance: &MinMaxInstance, ws: &Workspace, steps: usize) -> Vec<f64> {
    let lo = ws
        .initial_deltas(instance)
        .iter()
        .flatten()
        .copied()
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let hi = 2.0
        * ws
            .single_center_costs(instance)
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max);
    if !(hi > 0.0) {
        return vec![1.0];
    }
    if !lo.is_finite() || lo >= hi || steps <= 1 {
        return vec![hi];
    }
    let ratio = (hi / lo).powf(1.0 / (steps - 1) as f64);
    let mut grid: Vec<f64> = (0..steps).map(|j| lo * ratio.powi(j as i32)).collect();
    *grid.last_mut().expect("steps > 1") = hi;
    grid
}

/// Runs reverse greedy over a budget grid and keeps the best objective.
pub fn solve_with_budget_search(instance: &MinMaxInstance, steps: usize) -> Result<BudgetSearch> {
    instance.validate()?;
    let ws = Workspace::new(instance);
    let grid = budget_grid_with(instance, &ws, steps);
    solve_over_budgets(instance, &grid, &ws)
}

/// Runs reverse greedy at each given budget and keeps the best objective
/// (earliest budget on ties).
pub fn solve_with_budgets(instance: &MinMaxInstance, budgets: &[f64]) -> Result<BudgetSearch> {
    instance.validate()?;
    let ws = Workspace::new(instance);
    solve_over_budgets(instance, budgets, &ws)
}

fn solve_over_budgets(instance: &MinMaxInstance, budgets: &[f64], ws: &Workspace) -> Result<BudgetSearch> {
    let runs: Vec<Result<MinMaxSolution>> = budgets
        .par_iter()
        .map(|&b| run_reverse_greedy(instance, b, ws))
        .collect();
    let mut tried = Vec::with_capacity(runs.len());
    let mut best: Option<MinMaxSolution> = None;
    for (run, &b) in runs.into_iter().zip(budgets) {
        match run {
            Ok(sol) => {
                tried.push((b, Some(sol.objective)));
                if best.as_ref().is_none_or(|s| sol.objective < s.objective) {
                    best = Some(sol);
                }
            }
            Err(Error::Infeasible { .. }) => tried.push((b, None)),
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or_else(|| Error::Infeasible {
        budget: budgets.iter().copied().fold(0.0, f64::max),
        iteration: 1,
    })?;
    Ok(BudgetSearch { best, tried })
}
