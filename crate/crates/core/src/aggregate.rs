//! Per-machine aggregation: drop points in sparse neighbourhoods and collapse
//! the rest onto a few weighted locations.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::geometry::{center_cost_with_outliers, ClusteringSolution, Metric, Point, PointId, WeightedPointSet};
use crate::kzc::DistanceMatrix;

/// How the next location is chosen among points whose `2L`-ball still holds more than `y` points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelectionRule {
    /// Largest `2L`-ball, lowest index on ties.
    #[default]
    Densest,
    /// Lowest index.
    FirstFound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationResult {
    /// Chosen locations with the number of points moved onto each.
    pub summary: WeightedPointSet,
    /// Points left uncovered at termination.
    pub discarded: Vec<Point>,
    /// Surviving input point -> index into `summary`.
    pub assignment: BTreeMap<PointId, usize>,
}

impl AggregationResult {
    /// Checks the structural guarantees of the procedure against its input and
    /// returns a description of every violation.
    pub fn violations(&self, input: &[Point], l: f64, y: f64, metric: &Metric) -> Vec<String> {
        let mut out = Vec::new();
        let by_id: BTreeMap<PointId, &Point> = input.iter().map(|p| (p.id, p)).collect();
        let summary = self.summary.points();

        for q in summary {
            if by_id.get(&q.id).is_none_or(|p| p.coords() != q.coords()) {
                out.push(format!("summary point {} is not an input point", q.id));
            }
        }
        let total = self.summary.total_weight() + self.discarded.len() as f64;
        if total != input.len() as f64 {
            out.push(format!("weights + discarded = {total}, input has {}", input.len()));
        }
        if self.assignment.len() + self.discarded.len() != input.len() {
            out.push("assignment and discarded do not partition the input".into());
        }
        let mut preimage = vec![0usize; summary.len()];
        for (&id, &slot) in &self.assignment {
            let Some(p) = by_id.get(&id) else {
                out.push(format!("assigned id {id} is not an input point"));
                continue;
            };
            let d = metric.dist(p.coords(), summary[slot].coords());
            if d > 4.0 * l {
                out.push(format!("point {id} moved {d} > 4L"));
            }
            preimage[slot] += 1;
        }
        for (slot, (&count, &w)) in preimage.iter().zip(self.summary.weights()).enumerate() {
            if count as f64 != w {
                out.push(format!("summary entry {slot} has weight {w} but preimage {count}"));
            }
        }
        // discarded = input minus everything within 4L of a summary location
        for p in input {
            let covered = summary.iter().any(|q| metric.dist(p.coords(), q.coords()) <= 4.0 * l);
            let dropped = self.discarded.iter().any(|u| u.id == p.id);
            if covered == dropped {
                out.push(format!("point {} covered={covered} but discarded={dropped}", p.id));
            }
        }
        for p in input {
            let dense = self
                .discarded
                .iter()
                .filter(|u| metric.dist(p.coords(), u.coords()) <= 2.0 * l)
                .count();
            if dense as f64 > y {
                out.push(format!("point {} still sees {dense} > y discarded points within 2L", p.id));
            }
        }
        out
    }
}

/// Aggregation over a fixed point list; the distance matrix is reused across guesses of `L`.
#[derive(Clone, Debug)]
pub struct Aggregator {
    points: Vec<Point>,
    matrix: DistanceMatrix,
}

impl Aggregator {
    pub fn new(points: Vec<Point>, metric: &Metric) -> Self {
        Self {
            matrix: DistanceMatrix::new(&points, metric),
            points,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn matrix(&self) -> &DistanceMatrix {
        &self.matrix
    }

    pub fn run(&self, l: f64, y: f64, rule: SelectionRule) -> Result<AggregationResult> {
        if !(l >= 0.0) || !(y >= 0.0) {
            return Err(invalid(format!("need L >= 0 and y >= 0, got L={l}, y={y}")));
        }
        let n = self.points.len();
        let (inner, outer) = (2.0 * l, 4.0 * l);
        let mut alive = vec![true; n];
        let mut dense: Vec<usize> = (0..n)
            .map(|p| self.matrix.row(p).iter().filter(|&&d| d <= inner).count())
            .collect();
        let mut summary = WeightedPointSet::default();
        let mut assignment = BTreeMap::new();

        while let Some(p) = self.pick(&dense, y, rule) {
            let slot = summary.len();
            let row = self.matrix.row(p);
            let mut moved = 0usize;
            for u in 0..n {
                if alive[u] && row[u] <= outer {
                    alive[u] = false;
                    moved += 1;
                    assignment.insert(self.points[u].id, slot);
                    for (q, count) in dense.iter_mut().enumerate() {
                        if self.matrix.get(q, u) <= inner {
                            *count -= 1;
                        }
                    }
                }
            }
            summary.push(self.points[p].clone(), moved as f64)?;
        }

        let discarded = (0..n).filter(|&u| alive[u]).map(|u| self.points[u].clone()).collect();
        Ok(AggregationResult {
            summary,
            discarded,
            assignment,
        })
    }

    fn pick(&self, dense: &[usize], y: f64, rule: SelectionRule) -> Option<usize> {
        match rule {
            SelectionRule::FirstFound => dense.iter().position(|&c| c as f64 > y),
            SelectionRule::Densest => {
                let (p, &c) = dense
                    .iter()
                    .enumerate()
                    .fold(None, |best: Option<(usize, &usize)>, cur| match best {
                        Some(b) if *b.1 >= *cur.1 => Some(b),
                        _ => Some(cur),
                    })?;
                (c as f64 > y).then_some(p)
            }
        }
    }
}

pub fn aggregate(points: &[Point], l: f64, y: f64, metric: &Metric) -> Result<AggregationResult> {
    Aggregator::new(points.to_vec(), metric).run(l, y, SelectionRule::Densest)
}

pub fn aggregate_with(
    points: &[Point],
    l: f64,
    y: f64,
    metric: &Metric,
    rule: SelectionRule,
) -> Result<AggregationResult> {
    Aggregator::new(points.to_vec(), metric).run(l, y, rule)
}

/// Checks `|Q'| <= k + ẑ/y` given a witness `(k, ẑ)`-center solution of cost at most `L`
/// (`ẑ` is the witness's `outliers_allowed`).
pub fn verify_qprime_bound(
    result: &AggregationResult,
    input: &[Point],
    witness: &ClusteringSolution,
    y: f64,
    l: f64,
    metric: &Metric,
) -> Result<bool> {
    let z_hat = witness.outliers_allowed;
    let unit = WeightedPointSet::unit(input.to_vec());
    let cost = center_cost_with_outliers(&unit, &witness.centers, z_hat, metric)?;
    if cost > l {
        return Err(Error::InvalidWitness { cost, limit: l });
    }
    let k = witness.centers.len() as f64;
    let bound = if z_hat == 0.0 {
        k
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        k + z_hat / y
    };
    Ok(result.summary.len() as f64 <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{line_points, ObjectiveKind};

    fn witness(centers: &[f64], z_hat: f64) -> ClusteringSolution {
        ClusteringSolution {
            centers: line_points(centers),
            objective: 0.0,
            outliers_allowed: z_hat,
            kind: ObjectiveKind::CenterRadius,
        }
    }

    #[test]
    fn hand_trace() {
        let q = line_points(&[0.0, 0.1, 9.0]);
        let r = aggregate(&q, 1.0, 1.0, &Metric::Euclidean).unwrap();
        assert_eq!(r.summary.points()[0].coords(), &[0.0]);
        assert_eq!(r.summary.weights(), &[2.0]);
        assert_eq!(r.discarded.len(), 1);
        assert_eq!(r.discarded[0].coords(), &[9.0]);
        assert_eq!(r.assignment.get(&1), Some(&0));
        assert!(r.violations(&q, 1.0, 1.0, &Metric::Euclidean).is_empty());
    }

    #[test]
    fn nothing_aggregated_below_threshold() {
        let q = line_points(&[0.0, 1.0]);
        let r = aggregate(&q, 1.0, 5.0, &Metric::Euclidean).unwrap();
        assert!(r.summary.is_empty());
        assert_eq!(r.discarded.len(), 2);
    }

    #[test]
    fn empty_input() {
        let r = aggregate(&[], 1.0, 1.0, &Metric::Euclidean).unwrap();
        assert!(r.summary.is_empty() && r.discarded.is_empty() && r.assignment.is_empty());
    }

    #[test]
    fn rejects_negative_parameters() {
        let q = line_points(&[0.0]);
        assert!(aggregate(&q, -1.0, 0.0, &Metric::Euclidean).is_err());
        assert!(aggregate(&q, 1.0, -0.5, &Metric::Euclidean).is_err());
    }

    #[test]
    fn zero_y_keeps_every_point() {
        let q = line_points(&[0.0, 0.0, 3.0, 7.5]);
        let r = aggregate(&q, 0.0, 0.0, &Metric::Euclidean).unwrap();
        assert!(r.discarded.is_empty());
        assert_eq!(r.summary.len(), 3);
        assert_eq!(r.summary.total_weight(), 4.0);
    }

    #[test]
    fn qprime_bound_on_planted_line() {
        // clusters around 0 and 100 (radius 1), four scattered outliers
        let q = line_points(&[0.0, 0.5, -0.5, 1.0, 100.0, 100.5, 99.2, 40.0, 55.0, 70.0, 160.0]);
        let w = witness(&[0.0, 100.0], 4.0);
        for rule in [SelectionRule::Densest, SelectionRule::FirstFound] {
            let r = aggregate_with(&q, 1.0, 2.0, &Metric::Euclidean, rule).unwrap();
            assert!(verify_qprime_bound(&r, &q, &w, 2.0, 1.0, &Metric::Euclidean).unwrap());
            assert!(r.summary.len() <= 4);
            assert!(r.violations(&q, 1.0, 2.0, &Metric::Euclidean).is_empty());
        }
    }

    #[test]
    fn qprime_bound_without_outliers() {
        let q = line_points(&[0.0, 0.3, 0.9, 50.0, 50.2]);
        let w = witness(&[0.5, 50.1], 0.0);
        let r = aggregate(&q, 1.0, 0.7, &Metric::Euclidean).unwrap();
        assert!(verify_qprime_bound(&r, &q, &w, 0.7, 1.0, &Metric::Euclidean).unwrap());
        assert!(r.summary.len() <= 2);

        let single = line_points(&[3.0, 3.2, 2.9]);
        let r = aggregate(&single, 1.0, 1.0, &Metric::Euclidean).unwrap();
        assert!(verify_qprime_bound(&r, &single, &witness(&[3.0], 0.0), 1.0, 1.0, &Metric::Euclidean).unwrap());
        assert_eq!(r.summary.len(), 1);
    }

    #[test]
    fn rejects_invalid_witness() {
        let q = line_points(&[0.0, 10.0]);
        let r = aggregate(&q, 1.0, 1.0, &Metric::Euclidean).unwrap();
        assert!(matches!(
            verify_qprime_bound(&r, &q, &witness(&[0.0], 0.0), 1.0, 1.0, &Metric::Euclidean),
            Err(Error::InvalidWitness { .. })
        ));
    }
}
