use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::geometry::Point;
use crate::rng::{seeded, Rng};

use super::dataset::Dataset;

/// Clusters of known radius far apart from one another, plus isolated points
/// far from every cluster.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantedInstance {
    pub points: Vec<Point>,
    pub cluster_centers: Vec<Vec<f64>>,
    pub cluster_radius: f64,
    /// Indices into `points` of the planted outliers.
    pub outliers: Vec<usize>,
}

fn unit_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

fn in_ball(center: &[f64], radius: f64, rng: &mut Rng) -> Vec<f64> {
    let dir = unit_direction(center.len(), rng);
    let r = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
    center.iter().zip(dir).map(|(c, u)| c + r * u).collect()
}

/// `inliers` points spread over `k` unit balls whose centers sit 50 apart on
/// the first axis, plus `outliers` points at distance 500 to 1000 from
/// the origin. Point order is shuffled.
pub fn planted_kcenter(inliers: usize, k: usize, outliers: usize, dim: usize, seed: u64) -> Result<PlantedInstance> {
    if k == 0 || dim == 0 || inliers < k {
        return Err(invalid("need k >= 1, dim >= 1 and at least k inliers"));
    }
    let mut rng = seeded(seed);
    let cluster_centers: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut c: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..5.0)).collect();
            c[0] += 50.0 * j as f64;
            c
        })
        .collect();
    let mut rows: Vec<(bool, Vec<f64>)> = (0..inliers)
        .map(|i| (false, in_ball(&cluster_centers[i % k], 1.0, &mut rng)))
        .collect();
    for _ in 0..outliers {
        let dir = unit_direction(dim, &mut rng);
        let r = rng.random_range(500.0..1000.0);
        rows.push((true, dir.into_iter().map(|u| u * r).collect()));
    }
    rows.shuffle(&mut rng);
    let mut points = Vec::with_capacity(rows.len());
    let mut planted = Vec::new();
    for (i, (outlier, x)) in rows.into_iter().enumerate() {
        if outlier {
            planted.push(i);
        }
        points.push(Point::new(i as u64, x)?);
    }
    Ok(PlantedInstance {
        points,
        cluster_centers,
        cluster_radius: 1.0,
        outliers: planted,
    })
}

/// `n` points from `k` isotropic Gaussians with standard deviation `sigma`
/// whose means are uniform in `[0, extent]^dim`; points cycle through the
/// components.
pub fn gaussian_mixture(n: usize, k: usize, dim: usize, sigma: f64, extent: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || k == 0 || dim == 0 {
        return Err(invalid("need n, k and dim all at least 1"));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seeded(seed);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..=extent)).collect())
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| means[i % k].iter().map(|m| m + normal.sample(&mut rng)).collect())
        .collect();
    Dataset::from_rows(
        format!("gauss-{k}x{dim}"),
        &rows,
        format!("gaussian mixture n={n} k={k} dim={dim} sigma={sigma} extent={extent} seed={seed}"),
    )
}
