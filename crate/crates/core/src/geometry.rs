//! Points, metrics and the clustering cost functionals shared by every solver.
//!
//! Point sets are multisets: two [`Point`]s may share coordinates but carry
//! distinct ids. Weighted sets store real weights; protocols that need integer
//! weights check integrality on entry.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type PointId = u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: PointId,
    coords: Vec<f64>,
}

impl Point {
    pub fn new(id: PointId, coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("a point needs at least one coordinate"));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(invalid(format!("non-finite coordinate {bad} in point {id}")));
        }
        Ok(Self { id, coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// A copy at the same location with a different identity.
    pub fn with_id(&self, id: PointId) -> Self {
        Self {
            id,
            coords: self.coords.clone(),
        }
    }
}

/// Builds points with ids `0..rows.len()`.
pub fn points_from_rows(rows: &[Vec<f64>]) -> Result<Vec<Point>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| Point::new(i as PointId, r.clone()))
        .collect()
}

/// Builds 1-D points from scalars with ids `0..values.len()`.
pub fn line_points(values: &[f64]) -> Vec<Point> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| Point::new(i as PointId, vec![v]).expect("finite scalar"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Euclidean,
    /// Zero for coincident points, otherwise the Euclidean distance clamped to `[floor, cap]`.
    Clamped { floor: f64, cap: f64 },
    /// `min(base, threshold)`.
    Truncated { base: Box<Metric>, threshold: f64 },
}

impl Metric {
    /// The clamped metric with floor `eps * d_min / (2n)` and cap `2 * d_max`.
    pub fn clamped_for(d_min: f64, d_max: f64, n: usize, eps: f64) -> Self {
        Metric::Clamped {
            floor: eps * d_min / (2.0 * n as f64),
            cap: 2.0 * d_max,
        }
    }

    pub fn truncated(&self, threshold: f64) -> Self {
        Metric::Truncated {
            base: Box::new(self.clone()),
            threshold,
        }
    }

    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        if p.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                left: p.dim(),
                right: q.dim(),
            });
        }
        Ok(self.dist(p.coords(), q.coords()))
    }

    /// Unchecked distance between coordinate slices of equal length.
    #[inline]
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Clamped { floor, cap } => {
                let d = euclidean(a, b);
                if d == 0.0 {
                    0.0
                } else {
                    d.max(*floor).min(*cap)
                }
            }
            Metric::Truncated { base, threshold } => base.dist(a, b).min(*threshold),
        }
    }

    /// Distance from `a` to the closest of `centers`; infinity when `centers` is empty.
    #[inline]
    pub fn dist_to_set(&self, a: &[f64], centers: &[Point]) -> f64 {
        centers
            .iter()
            .map(|c| self.dist(a, c.coords()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointSet {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid(format!("weights must be positive and finite, got {w}")));
        }
        check_dims(&points)?;
        Ok(Self { points, weights })
    }

    pub fn unit(points: Vec<Point>) -> Self {
        let weights = vec![1.0; points.len()];
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Point::dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn push(&mut self, point: Point, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(invalid(format!("weights must be positive and finite, got {weight}")));
        }
        if let Some(d) = self.dim() {
            if d != point.dim() {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: point.dim(),
                });
            }
        }
        self.points.push(point);
        self.weights.push(weight);
        Ok(())
    }

    pub fn extend(&mut self, other: &WeightedPointSet) -> Result<()> {
        for (p, w) in other.iter() {
            self.push(p.clone(), w)?;
        }
        Ok(())
    }

    pub fn ensure_integral(&self) -> Result<()> {
        match self.weights.iter().find(|w| w.fract() != 0.0) {
            Some(w) => Err(invalid(format!("expected integer weights, found {w}"))),
            None => Ok(()),
        }
    }

    pub fn into_parts(self) -> (Vec<Point>, Vec<f64>) {
        (self.points, self.weights)
    }
}

pub(crate) fn check_dims(points: &[Point]) -> Result<()> {
    if let Some(first) = points.first() {
        if let Some(bad) = points.iter().find(|p| p.dim() != first.dim()) {
            return Err(Error::DimensionMismatch {
                left: first.dim(),
                right: bad.dim(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    CenterRadius,
    MedianSum,
    MeansSumOfSquares,
}

/// The exponent of a sum objective: 1 for median, 2 for means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumObjective {
    Median,
    Means,
}

impl SumObjective {
    #[inline]
    pub fn power(self, d: f64) -> f64 {
        match self {
            SumObjective::Median => d,
            SumObjective::Means => d * d,
        }
    }

    pub fn exponent(self) -> i32 {
        match self {
            SumObjective::Median => 1,
            SumObjective::Means => 2,
        }
    }

    pub fn kind(self) -> ObjectiveKind {
        match self {
            SumObjective::Median => ObjectiveKind::MedianSum,
            SumObjective::Means => ObjectiveKind::MeansSumOfSquares,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSolution {
    pub centers: Vec<Point>,
    pub objective: f64,
    pub outliers_allowed: f64,
    pub kind: ObjectiveKind,
}

impl ClusteringSolution {
    /// Scores `centers` against `points` with `outliers` weight discarded.
    pub fn evaluate(
        points: &WeightedPointSet,
        centers: Vec<Point>,
        outliers: f64,
        kind: ObjectiveKind,
        metric: &Metric,
    ) -> Result<Self> {
        let objective = objective_value(points, &centers, outliers, kind, metric)?;
        Ok(Self {
            centers,
            objective,
            outliers_allowed: outliers,
            kind,
        })
    }

    pub fn recompute(&self, points: &WeightedPointSet, metric: &Metric) -> Result<f64> {
        objective_value(points, &self.centers, self.outliers_allowed, self.kind, metric)
    }
}

pub fn objective_value(
    points: &WeightedPointSet,
    centers: &[Point],
    outliers: f64,
    kind: ObjectiveKind,
    metric: &Metric,
) -> Result<f64> {
    match kind {
        ObjectiveKind::CenterRadius => center_cost_with_outliers(points, centers, outliers, metric),
        ObjectiveKind::MedianSum => {
            cost_with_outliers(points, centers, outliers, SumObjective::Median, metric)
        }
        ObjectiveKind::MeansSumOfSquares => {
            cost_with_outliers(points, centers, outliers, SumObjective::Means, metric)
        }
    }
}

/// Entries of `set` within distance `r` of `center` (inclusive).
pub fn ball(set: &WeightedPointSet, center: &Point, r: f64, metric: &Metric) -> Result<WeightedPointSet> {
    if let Some(d) = set.dim() {
        if d != center.dim() {
            return Err(Error::DimensionMismatch {
                left: d,
                right: center.dim(),
            });
        }
    }
    let mut out = WeightedPointSet::default();
    for (p, w) in set.iter() {
        if metric.dist(p.coords(), center.coords()) <= r {
            out.points.push(p.clone());
            out.weights.push(w);
        }
    }
    Ok(out)
}

/// `(distance to closest center, weight)` for every entry, in input order.
pub fn distances_to_centers(
    points: &WeightedPointSet,
    centers: &[Point],
    metric: &Metric,
) -> Result<Vec<(f64, f64)>> {
    if centers.is_empty() {
        return Err(Error::EmptyInput("center set"));
    }
    if let (Some(d), Some(c)) = (points.dim(), centers.first()) {
        if d != c.dim() {
            return Err(Error::DimensionMismatch {
                left: d,
                right: c.dim(),
            });
        }
    }
    Ok(points
        .iter()
        .map(|(p, w)| (metric.dist_to_set(p.coords(), centers), w))
        .collect())
}

fn check_budget(z: f64, n: f64) -> Result<()> {
    if !(z >= 0.0) || z >= n {
        return Err(Error::OutlierBudget { z, n });
    }
    Ok(())
}

fn sort_descending(v: &mut [(f64, f64)]) {
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
}

/// Sum objective with outlier mass `z` removed greedily from the farthest side.
///
/// For unit weights this keeps the `n - ceil(z)` closest points at full weight and
/// the next one at weight `ceil(z) - z`.
pub fn cost_with_outliers(
    points: &WeightedPointSet,
    centers: &[Point],
    z: f64,
    objective: SumObjective,
    metric: &Metric,
) -> Result<f64> {
    check_budget(z, points.total_weight())?;
    let mut d = distances_to_centers(points, centers, metric)?;
    Ok(trimmed_sum(&mut d, z, objective))
}

pub(crate) fn trimmed_sum(d: &mut [(f64, f64)], z: f64, objective: SumObjective) -> f64 {
    sort_descending(d);
    let mut budget = z;
    let mut total = 0.0;
    let mut kept = Vec::with_capacity(d.len());
    for &(dist, w) in d.iter() {
        let dropped = budget.min(w);
        budget -= dropped;
        let keep = w - dropped;
        if keep > 0.0 {
            kept.push(keep * objective.power(dist));
        }
    }
    for term in kept.iter().rev() {
        total += term;
    }
    total
}

/// Radius after discarding outlier weight `z`: the smallest `r` such that the
/// weight farther than `r` from `centers` is at most `z`.
pub fn center_cost_with_outliers(
    points: &WeightedPointSet,
    centers: &[Point],
    z: f64,
    metric: &Metric,
) -> Result<f64> {
    check_budget(z, points.total_weight())?;
    let mut d = distances_to_centers(points, centers, metric)?;
    Ok(trimmed_radius(&mut d, z))
}

pub(crate) fn trimmed_radius(d: &mut [(f64, f64)], z: f64) -> f64 {
    sort_descending(d);
    let mut dropped = 0.0;
    for &(dist, w) in d.iter() {
        if dropped + w > z {
            return dist;
        }
        dropped += w;
    }
    0.0
}

/// Number (weight) of entries strictly farther than `radius` from `centers`.
pub fn weight_beyond(points: &WeightedPointSet, centers: &[Point], radius: f64, metric: &Metric) -> f64 {
    points
        .iter()
        .filter(|(p, _)| metric.dist_to_set(p.coords(), centers) > radius)
        .map(|(_, w)| w)
        .sum()
}

/// Minimum and maximum non-zero pairwise distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseExtent {
    pub d_min: f64,
    pub d_max: f64,
}

/// `None` when every pair coincides (or fewer than two points).
pub fn pairwise_extent(points: &[Point], metric: &Metric) -> Option<PairwiseExtent> {
    let (lo, hi) = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let a = points[i].coords();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for q in &points[i + 1..] {
                let d = metric.dist(a, q.coords());
                if d > 0.0 {
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            (lo, hi)
        })
        .reduce(
            || (f64::INFINITY, 0.0),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    (hi > 0.0).then_some(PairwiseExtent { d_min: lo, d_max: hi })
}
