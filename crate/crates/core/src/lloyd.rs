//! k-means++ seeding and Lloyd iterations with optional trimming of the
//! farthest weight.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Metric, Point, SumObjective, WeightedPointSet};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    pub max_iters: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-9,
        }
    }
}

/// D^ℓ sampling. Returns fewer than `k` centers when every remaining entry
/// already coincides with a chosen center.
pub fn kmeanspp(
    points: &WeightedPointSet,
    k: usize,
    objective: SumObjective,
    metric: &Metric,
    rng: &mut Rng,
) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let pts = points.points();
    let first = WeightedIndex::new(points.weights())
        .map_err(|e| invalid(e.to_string()))?
        .sample(rng);
    let mut centers = vec![pts[first].clone()];
    let mut nearest: Vec<f64> = pts
        .iter()
        .map(|p| metric.dist(p.coords(), pts[first].coords()))
        .collect();
    while centers.len() < k {
        let mass: Vec<f64> = nearest
            .iter()
            .zip(points.weights())
            .map(|(&d, &w)| w * objective.power(d))
            .collect();
        let Ok(pick) = WeightedIndex::new(&mass) else {
            break;
        };
        let c = pick.sample(rng);
        for (d, p) in nearest.iter_mut().zip(pts) {
            *d = d.min(metric.dist(p.coords(), pts[c].coords()));
        }
        centers.push(pts[c].clone());
    }
    Ok(centers)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LloydRun {
    pub centers: Vec<Point>,
    /// Objective (with the trimmed weight removed) before the first step and after each step.
    pub trace: Vec<f64>,
}

impl LloydRun {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial objective")
    }
}

struct Assignment {
    nearest: Vec<(usize, f64)>,
    inlier: Vec<f64>,
    objective: f64,
}

fn assign(points: &WeightedPointSet, centers: &[Point], z: f64, objective: SumObjective, metric: &Metric) -> Assignment {
    let nearest: Vec<(usize, f64)> = points
        .points()
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, metric.dist(p.coords(), c.coords())))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect();
    let mut order: Vec<usize> = (0..nearest.len()).collect();
    order.sort_by(|&a, &b| nearest[b].1.total_cmp(&nearest[a].1).then(a.cmp(&b)));
    let mut inlier = points.weights().to_vec();
    let mut budget = z;
    for &i in &order {
        if budget <= 0.0 {
            break;
        }
        let dropped = budget.min(inlier[i]);
        inlier[i] -= dropped;
        budget -= dropped;
    }
    let objective = order
        .iter()
        .rev()
        .map(|&i| inlier[i] * objective.power(nearest[i].1))
        .sum();
    Assignment {
        nearest,
        inlier,
        objective,
    }
}

/// Alternates nearest-center assignment with weighted-mean updates, leaving
/// the `z` weight farthest from the current centers out of each update.
/// With `z = 0` this is plain Lloyd.
pub fn trimmed_lloyd(
    points: &WeightedPointSet,
    init: Vec<Point>,
    z: f64,
    objective: SumObjective,
    metric: &Metric,
    config: &LloydConfig,
) -> Result<LloydRun> {
    if init.is_empty() {
        return Err(Error::EmptyInput("initial centers"));
    }
    if !(z >= 0.0) || z >= points.total_weight() {
        return Err(Error::OutlierBudget {
            z,
            n: points.total_weight(),
        });
    }
    let dim = init[0].dim();
    let mut centers = init;
    let mut current = assign(points, &centers, z, objective, metric);
    let mut trace = vec![current.objective];
    for _ in 0..config.max_iters {
        let k = centers.len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut mass = vec![0.0; k];
        for (i, p) in points.points().iter().enumerate() {
            let w = current.inlier[i];
            if w > 0.0 {
                let j = current.nearest[i].0;
                mass[j] += w;
                for (s, x) in sums[j].iter_mut().zip(p.coords()) {
                    *s += w * x;
                }
            }
        }
        // Empty clusters move to the farthest inliers, one each.
        let mut spare: Vec<usize> = (0..points.len()).filter(|&i| current.inlier[i] > 0.0).collect();
        spare.sort_by(|&a, &b| current.nearest[b].1.total_cmp(&current.nearest[a].1).then(a.cmp(&b)));
        let mut spare = spare.into_iter();
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let coords = if mass[j] > 0.0 {
                sums[j].iter().map(|s| s / mass[j]).collect()
            } else {
                match spare.next() {
                    Some(i) => points.points()[i].coords().to_vec(),
                    None => centers[j].coords().to_vec(),
                }
            };
            next.push(Point::new(j as u64, coords)?);
        }
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| crate::geometry::euclidean(a.coords(), b.coords()))
            .fold(0.0, f64::max);
        centers = next;
        current = assign(points, &centers, z, objective, metric);
        trace.push(current.objective);
        if shift <= config.tol {
            break;
        }
    }
    Ok(LloydRun { centers, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cost_with_outliers, line_points, points_from_rows};
    use crate::rng::seeded;

    #[test]
    fn two_pairs_converge_to_midpoints() {
        let pts = points_from_rows(&[vec![0.0, 0.0], vec![0.0, 2.0], vec![10.0, 0.0], vec![10.0, 2.0]]).unwrap();
        let set = WeightedPointSet::unit(pts);
        let init = vec![set.points()[0].clone(), set.points()[2].clone()];
        let run = trimmed_lloyd(&set, init, 0.0, SumObjective::Means, &Metric::Euclidean, &LloydConfig::default())
            .unwrap();
        let mut got: Vec<Vec<f64>> = run.centers.iter().map(|c| c.coords().to_vec()).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, vec![vec![0.0, 1.0], vec![10.0, 1.0]]);
        assert_eq!(run.objective(), 4.0);
    }

    #[test]
    fn trace_matches_trimmed_cost_and_never_increases() {
        let set = WeightedPointSet::unit(line_points(&[0.0, 1.0, 2.0, 9.0, 10.0, 11.0, 50.0, -40.0]));
        let init = line_points(&[0.0, 1.0]);
        let run = trimmed_lloyd(&set, init, 2.0, SumObjective::Means, &Metric::Euclidean, &LloydConfig::default())
            .unwrap();
        for w in run.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        let direct = cost_with_outliers(&set, &run.centers, 2.0, SumObjective::Means, &Metric::Euclidean).unwrap();
        assert!((direct - run.objective()).abs() < 1e-9);
        assert_eq!(run.objective(), 4.0);
    }

    #[test]
    fn seeding_stops_at_distinct_locations() {
        let set = WeightedPointSet::unit(line_points(&[1.0, 1.0, 4.0]));
        let c = kmeanspp(&set, 5, SumObjective::Means, &Metric::Euclidean, &mut seeded(1)).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let set = WeightedPointSet::unit(line_points(&[0.0, 1.0, 20.0]));
        let init = line_points(&[0.0, 100.0]);
        let run = trimmed_lloyd(&set, init, 0.0, SumObjective::Means, &Metric::Euclidean, &LloydConfig::default())
            .unwrap();
        assert_eq!(run.objective(), 0.5);
    }
}
