//! Centralized weighted (k, z)-center routines: the greedy disk-cover solver
//! run at the coordinator, farthest-first traversal, and an exhaustive oracle.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{trimmed_radius, ClusteringSolution, Metric, ObjectiveKind, Point, WeightedPointSet};

#[derive(Clone, Debug, PartialEq)]
pub enum KzcOutcome {
    Centers(Vec<Point>),
    No,
}

impl KzcOutcome {
    pub fn centers(&self) -> Option<&[Point]> {
        match self {
            KzcOutcome::Centers(c) => Some(c),
            KzcOutcome::No => None,
        }
    }
}

/// Dense symmetric distance matrix over a point list.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(points: &[Point], metric: &Metric) -> Self {
        let n = points.len();
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let a = points[i].coords();
                points.iter().map(move |q| metric.dist(a, q.coords()))
            })
            .collect();
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Greedy (k, z')-center on a weighted set: `k` times, pick the point of `q`
/// whose `2L'`-ball holds the most uncovered weight and cover its `4L'`-ball.
/// Returns the chosen centers if at most `z'` weight stays uncovered.
pub fn kzc(k: usize, z_prime: f64, q: &WeightedPointSet, l_prime: f64, metric: &Metric) -> Result<KzcOutcome> {
    let matrix = DistanceMatrix::new(q.points(), metric);
    let picked = kzc_indices(k, z_prime, q.weights(), &matrix, l_prime)?;
    Ok(match picked {
        Some(idx) => KzcOutcome::Centers(idx.into_iter().map(|i| q.points()[i].clone()).collect()),
        None => KzcOutcome::No,
    })
}

/// Index form of [`kzc`] over a precomputed matrix. Ties go to the lowest index.
pub fn kzc_indices(
    k: usize,
    z_prime: f64,
    weights: &[f64],
    matrix: &DistanceMatrix,
    l_prime: f64,
) -> Result<Option<Vec<usize>>> {
    if !(z_prime >= 0.0) {
        return Err(invalid(format!("outlier budget must be nonnegative, got {z_prime}")));
    }
    if !(l_prime >= 0.0) {
        return Err(invalid(format!("radius guess must be nonnegative, got {l_prime}")));
    }
    debug_assert_eq!(weights.len(), matrix.len());
    let n = weights.len();
    let (inner, outer) = (2.0 * l_prime, 4.0 * l_prime);
    let mut uncovered = vec![true; n];
    let mut centers = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..n {
            let row = matrix.row(p);
            let mass: f64 = (0..n)
                .filter(|&u| uncovered[u] && row[u] <= inner)
                .map(|u| weights[u])
                .sum();
            if best.is_none_or(|(_, m)| mass > m) {
                best = Some((p, mass));
            }
        }
        match best {
            Some((p, mass)) if mass > 0.0 => {
                centers.push(p);
                let row = matrix.row(p);
                for u in 0..n {
                    if row[u] <= outer {
                        uncovered[u] = false;
                    }
                }
            }
            _ => break,
        }
    }
    let left: f64 = (0..n).filter(|&u| uncovered[u]).map(|u| weights[u]).sum();
    Ok((left <= z_prime).then_some(centers))
}

/// Every radius guess at which [`kzc`] can change behaviour: `0` and `d/2`, `d/4`
/// for each pairwise distance `d`, sorted and deduplicated.
pub fn kzc_thresholds(matrix: &DistanceMatrix) -> Vec<f64> {
    let n = matrix.len();
    let mut v = vec![0.0];
    for i in 0..n {
        for j in i + 1..n {
            let d = matrix.get(i, j);
            if d > 0.0 {
                v.push(d / 2.0);
                v.push(d / 4.0);
            }
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Binary-searches the thresholds for the smallest guess at which [`kzc`]
/// succeeds; returns `(guess, center indices)`.
pub fn kzc_search(k: usize, z_prime: f64, weights: &[f64], matrix: &DistanceMatrix) -> Result<(f64, Vec<usize>)> {
    let ladder = kzc_thresholds(matrix);
    let top = *ladder.last().expect("ladder contains 0");
    let mut best = match kzc_indices(k, z_prime, weights, matrix, top)? {
        Some(c) => (top, c),
        None => return Err(Error::NoLadderSolution),
    };
    let (mut lo, mut hi) = (0usize, ladder.len() - 1);
    // invariant: ladder[hi] succeeds
    if let Some(c) = kzc_indices(k, z_prime, weights, matrix, ladder[0])? {
        return Ok((ladder[0], c));
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match kzc_indices(k, z_prime, weights, matrix, ladder[mid])? {
            Some(c) => {
                hi = mid;
                best = (ladder[mid], c);
            }
            None => lo = mid,
        }
    }
    Ok(best)
}

/// Farthest-first traversal from the first point.
pub fn gonzalez_greedy(points: &WeightedPointSet, k: usize, metric: &Metric) -> Result<ClusteringSolution> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let pts = points.points();
    let mut centers = vec![pts[0].clone()];
    let mut nearest: Vec<f64> = pts.iter().map(|p| metric.dist(p.coords(), pts[0].coords())).collect();
    while centers.len() < k {
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, cur| if *cur.1 > *acc.1 { cur } else { acc });
        if d <= 0.0 {
            break;
        }
        let c = pts[far].clone();
        for (slot, p) in nearest.iter_mut().zip(pts) {
            *slot = slot.min(metric.dist(p.coords(), c.coords()));
        }
        centers.push(c);
    }
    let radius = nearest.iter().copied().fold(0.0, f64::max);
    Ok(ClusteringSolution {
        centers,
        objective: radius,
        outliers_allowed: 0.0,
        kind: ObjectiveKind::CenterRadius,
    })
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact (k, z)-center optimum over all `k`-subsets of `pool` (default: the
/// locations of `points`). Test oracle; refuses instances above `budget` subsets.
pub fn brute_force_kzcenter(
    points: &WeightedPointSet,
    k: usize,
    z: f64,
    metric: &Metric,
    pool: Option<&[Point]>,
    budget: u128,
) -> Result<ClusteringSolution> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let n = points.total_weight();
    if !(z >= 0.0) || z >= n {
        return Err(Error::OutlierBudget { z, n });
    }
    let pool = pool.unwrap_or(points.points());
    if pool.is_empty() || k == 0 {
        return Err(invalid("need k >= 1 and a nonempty candidate pool"));
    }
    let k = k.min(pool.len());
    let combinations = binomial(pool.len(), k);
    if combinations > budget {
        return Err(Error::BudgetExceeded { combinations, budget });
    }
    // dist[j][i]: candidate j to point i
    let dist: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|c| points.points().iter().map(|p| metric.dist(p.coords(), c.coords())).collect())
        .collect();
    let weights = points.weights();
    let eval = |combo: &[usize], scratch: &mut Vec<(f64, f64)>| -> f64 {
        scratch.clear();
        for (i, &w) in weights.iter().enumerate() {
            let d = combo.iter().map(|&j| dist[j][i]).fold(f64::INFINITY, f64::min);
            scratch.push((d, w));
        }
        trimmed_radius(scratch, z)
    };
    let best = (0..=pool.len() - k)
        .into_par_iter()
        .map(|first| {
            let mut scratch = Vec::with_capacity(weights.len());
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut combo: Vec<usize> = (first..first + k).collect();
            loop {
                let v = eval(&combo, &mut scratch);
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, combo.clone()));
                }
                if !advance_tail(&mut combo, pool.len()) {
                    break;
                }
            }
            best.expect("at least one subset")
        })
        .reduce_with(|a, b| match a.0.partial_cmp(&b.0) {
            Some(Ordering::Greater) => b,
            Some(Ordering::Less) => a,
            _ => {
                if b.1 < a.1 {
                    b
                } else {
                    a
                }
            }
        })
        .expect("pool holds at least k candidates");
    Ok(ClusteringSolution {
        centers: best.1.iter().map(|&j| pool[j].clone()).collect(),
        objective: best.0,
        outliers_allowed: z,
        kind: ObjectiveKind::CenterRadius,
    })
}

/// Advances `combo[1..]` to the next lexicographic subset, keeping `combo[0]` fixed.
fn advance_tail(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 1 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{center_cost_with_outliers, line_points};

    fn unit(values: &[f64]) -> WeightedPointSet {
        WeightedPointSet::unit(line_points(values))
    }

    fn coords(c: &[Point]) -> Vec<f64> {
        c.iter().map(|p| p.coords()[0]).collect()
    }

    #[test]
    fn kzc_hand_traces() {
        let m = Metric::Euclidean;
        let q = unit(&[0.0, 1.0, 10.0]);
        let out = kzc(1, 1.0, &q, 0.5, &m).unwrap();
        assert_eq!(coords(out.centers().unwrap()), vec![0.0]);
        // brute force agrees some 1-subset of Q reaches radius 1 with one outlier
        let bf = brute_force_kzcenter(&q, 1, 1.0, &m, None, 1000).unwrap();
        assert_eq!(bf.objective, 1.0);

        let single = unit(&[4.2]);
        let out = kzc(1, 0.0, &single, 3.0, &m).unwrap();
        assert_eq!(coords(out.centers().unwrap()), vec![4.2]);

        let two = unit(&[0.0, 10.0]);
        assert_eq!(kzc(1, 0.0, &two, 1.0, &m).unwrap(), KzcOutcome::No);
        assert!(brute_force_kzcenter(&two, 1, 0.0, &m, None, 1000).unwrap().objective > 1.0);
    }

    #[test]
    fn kzc_accepts_fractional_budget() {
        let m = Metric::Euclidean;
        let q = WeightedPointSet::new(line_points(&[0.0, 50.0]), vec![3.0, 1.0]).unwrap();
        assert_eq!(kzc(1, 0.5, &q, 1.0, &m).unwrap(), KzcOutcome::No);
        assert!(kzc(1, 1.0, &q, 1.0, &m).unwrap().centers().is_some());
        assert!(kzc(1, -0.1, &q, 1.0, &m).is_err());
    }

    #[test]
    fn kzc_stops_when_everything_is_covered() {
        let q = unit(&[0.0, 0.5, 1.0]);
        let out = kzc(3, 0.0, &q, 1.0, &Metric::Euclidean).unwrap();
        assert_eq!(out.centers().unwrap().len(), 1);
    }

    #[test]
    fn gonzalez_examples() {
        let m = Metric::Euclidean;
        let s = gonzalez_greedy(&unit(&[0.0, 10.0, 11.0]), 2, &m).unwrap();
        assert_eq!(coords(&s.centers), vec![0.0, 11.0]);
        assert_eq!(s.objective, 1.0);

        let s = gonzalez_greedy(&unit(&[3.0, 3.0, 7.0]), 5, &m).unwrap();
        assert_eq!(s.objective, 0.0);

        let s = gonzalez_greedy(&unit(&[0.0]), 1, &m).unwrap();
        assert_eq!((coords(&s.centers), s.objective), (vec![0.0], 0.0));
    }

    #[test]
    fn brute_force_examples() {
        let m = Metric::Euclidean;
        let p = unit(&[0.0, 1.0, 10.0]);
        let s = brute_force_kzcenter(&p, 1, 1.0, &m, None, 100).unwrap();
        assert_eq!(s.objective, 1.0);
        assert!([0.0, 1.0].contains(&s.centers[0].coords()[0]));

        let s = brute_force_kzcenter(&p, 1, 2.0, &m, None, 100).unwrap();
        assert_eq!(s.objective, 0.0);

        let s = brute_force_kzcenter(&p, 2, 0.0, &m, None, 100).unwrap();
        assert_eq!(s.objective, 1.0);
        assert_eq!(s.centers[1].coords()[0], 10.0);

        let big = unit(&(0..40).map(f64::from).collect::<Vec<_>>());
        assert!(matches!(
            brute_force_kzcenter(&big, 3, 0.0, &m, None, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn brute_force_uses_custom_pool() {
        let m = Metric::Euclidean;
        let p = unit(&[0.0, 1.0, 10.0]);
        let pool = line_points(&[0.5, 10.0]);
        let s = brute_force_kzcenter(&p, 2, 0.0, &m, Some(&pool), 100).unwrap();
        assert_eq!(s.objective, 0.5);
    }

    #[test]
    fn search_finds_smallest_threshold_on_line() {
        let p = unit(&[0.0, 1.0, 2.0, 30.0]);
        let mtx = DistanceMatrix::new(p.points(), &Metric::Euclidean);
        let (l, idx) = kzc_search(1, 1.0, p.weights(), &mtx).unwrap();
        // the 2L'-ball around 1 must hold {0,1,2}: L' = 0.5
        assert_eq!(l, 0.5);
        assert_eq!(idx, vec![1]);
        let cost = center_cost_with_outliers(&p, &[p.points()[1].clone()], 1.0, &Metric::Euclidean).unwrap();
        assert!(cost <= 4.0 * l);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(120, 3), 280_840);
        assert_eq!(binomial(3, 4), 0);
    }
}
