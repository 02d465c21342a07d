//! Comparison algorithms: sampling-based distributed k-center heuristics, a
//! weighted farthest-first summary scheme, and centralized Lloyd variants.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ClusteringSolution, Metric, ObjectiveKind, Point, SumObjective, WeightedPointSet};
use crate::kzc::{gonzalez_greedy, kzc_search, DistanceMatrix};
use crate::lloyd::{kmeanspp, trimmed_lloyd, LloydConfig};
use crate::partition::Partition;
use crate::rng::{derive_seed, seeded};
use crate::simnet::{CommLedger, CostingRule, Payload, SimNet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k: usize,
    pub z: usize,
    pub machines: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub rule: CostingRule,
}

impl BaselineConfig {
    pub fn new(k: usize, z: usize, machines: usize, dim: usize) -> Self {
        let lloyd = LloydConfig::default();
        Self {
            k,
            z,
            machines,
            seed: 0,
            max_iters: lloyd.max_iters,
            tol: lloyd.tol,
            rule: CostingRule::for_dim(dim),
        }
    }

    pub fn lloyd(&self) -> LloydConfig {
        LloydConfig {
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineRun {
    pub algorithm: &'static str,
    pub solution: ClusteringSolution,
    pub ledger: CommLedger,
    /// Set for schemes whose internals are a stand-in rather than a faithful port.
    pub stand_in: bool,
}

fn check_partition(partition: &Partition, config: &BaselineConfig) -> Result<()> {
    config.validate()?;
    if config.z >= partition.n() {
        return Err(Error::OutlierBudget {
            z: config.z as f64,
            n: partition.n() as f64,
        });
    }
    Ok(())
}

/// Every machine uploads a uniform sample of `min(k+z, n_i)` of its points.
fn upload_samples(partition: &Partition, config: &BaselineConfig) -> Result<(Vec<Point>, CommLedger)> {
    let per_machine = config.k + config.z;
    let mut net = SimNet::new(partition.parts().to_vec(), config.rule, 1, config.seed);
    net.machine_round(|i, part, _, out| {
        let mut rng = seeded(derive_seed(config.seed, i as u64));
        let take = per_machine.min(part.len());
        let mut idx = sample(&mut rng, part.len(), take).into_vec();
        idx.sort_unstable();
        out.send_to_coordinator(Payload::Points(idx.into_iter().map(|j| part[j].clone()).collect()));
        Ok(())
    })?;
    let mut pooled = Vec::new();
    for (_, payload) in net.collect() {
        if let Payload::Points(p) = payload {
            pooled.extend(p);
        }
    }
    if pooled.len() < config.k {
        return Err(invalid(format!("pooled sample of {} points is smaller than k = {}", pooled.len(), config.k)));
    }
    let (_, ledger) = net.into_parts();
    Ok((pooled, ledger))
}

fn center_solution(partition: &Partition, centers: Vec<Point>, z: usize) -> Result<ClusteringSolution> {
    ClusteringSolution::evaluate(
        &partition.union(),
        centers,
        z as f64,
        ObjectiveKind::CenterRadius,
        &Metric::Euclidean,
    )
}

/// Pools the machines' uniform samples and keeps `k` of them uniformly at random.
pub fn random_random(partition: &Partition, config: &BaselineConfig) -> Result<BaselineRun> {
    check_partition(partition, config)?;
    let (pooled, ledger) = upload_samples(partition, config)?;
    let mut rng = seeded(derive_seed(config.seed, 0));
    let mut idx = sample(&mut rng, pooled.len(), config.k).into_vec();
    idx.sort_unstable();
    let centers = idx.into_iter().map(|j| pooled[j].clone()).collect();
    Ok(BaselineRun {
        algorithm: "random-random",
        solution: center_solution(partition, centers, config.z)?,
        ledger,
        stand_in: false,
    })
}

/// Pools the machines' uniform samples and picks `k` centers by the smallest
/// successful greedy-cover threshold, discarding the sample's share of `z`.
pub fn random_kzc(partition: &Partition, config: &BaselineConfig) -> Result<BaselineRun> {
    check_partition(partition, config)?;
    let (pooled, ledger) = upload_samples(partition, config)?;
    let z_sample = config.z as f64 * pooled.len() as f64 / partition.n() as f64;
    let matrix = DistanceMatrix::new(&pooled, &Metric::Euclidean);
    let (_, idx) = kzc_search(config.k, z_sample, &vec![1.0; pooled.len()], &matrix)?;
    let centers = idx.into_iter().map(|j| pooled[j].clone()).collect();
    Ok(BaselineRun {
        algorithm: "random-kzc",
        solution: center_solution(partition, centers, config.z)?,
        ledger,
        stand_in: false,
    })
}

/// Stand-in for the weighted-summary scheme: each machine sends `k+z`
/// farthest-first centers weighted by their cluster populations, and the
/// coordinator runs the greedy-cover threshold search on the union.
pub fn mkcwm_style(partition: &Partition, config: &BaselineConfig) -> Result<BaselineRun> {
    check_partition(partition, config)?;
    let mut net = SimNet::new(partition.parts().to_vec(), config.rule, 1, config.seed);
    net.machine_round(|_, part, _, out| {
        let local = WeightedPointSet::unit(part.clone());
        let centers = gonzalez_greedy(&local, config.k + config.z, &Metric::Euclidean)?.centers;
        let mut weights = vec![0.0; centers.len()];
        for p in part.iter() {
            let j = (0..centers.len())
                .min_by(|&a, &b| {
                    Metric::Euclidean
                        .dist(p.coords(), centers[a].coords())
                        .total_cmp(&Metric::Euclidean.dist(p.coords(), centers[b].coords()))
                })
                .expect("at least one center");
            weights[j] += 1.0;
        }
        out.send_to_coordinator(Payload::Weighted(WeightedPointSet::new(centers, weights)?));
        Ok(())
    })?;
    let mut summary = WeightedPointSet::default();
    for (_, payload) in net.collect() {
        if let Payload::Weighted(s) = payload {
            summary.extend(&s)?;
        }
    }
    let (_, ledger) = net.into_parts();
    let matrix = DistanceMatrix::new(summary.points(), &Metric::Euclidean);
    let (_, idx) = kzc_search(config.k, config.z as f64, summary.weights(), &matrix)?;
    let centers = idx.into_iter().map(|j| summary.points()[j].clone()).collect();
    Ok(BaselineRun {
        algorithm: "mkcwm-style",
        solution: center_solution(partition, centers, config.z)?,
        ledger,
        stand_in: true,
    })
}

fn centralized_means(partition: &Partition, config: &BaselineConfig, z: usize, name: &'static str) -> Result<BaselineRun> {
    check_partition(partition, config)?;
    let all = partition.union();
    let mut ledger = CommLedger::default();
    ledger.charge_upload(partition.n() * config.rule.words_per_point);
    let mut rng = seeded(derive_seed(config.seed, 0));
    let init = kmeanspp(&all, config.k, SumObjective::Means, &Metric::Euclidean, &mut rng)?;
    let run = trimmed_lloyd(&all, init, z as f64, SumObjective::Means, &Metric::Euclidean, &config.lloyd())?;
    Ok(BaselineRun {
        algorithm: name,
        solution: ClusteringSolution {
            objective: run.objective(),
            centers: run.centers,
            outliers_allowed: z as f64,
            kind: ObjectiveKind::MeansSumOfSquares,
        },
        ledger,
        stand_in: false,
    })
}

/// k-means++ seeding followed by Lloyd iterations on the pooled data.
pub fn lloyd_kmeans(partition: &Partition, config: &BaselineConfig) -> Result<BaselineRun> {
    centralized_means(partition, config, 0, "lloyd-kmeans")
}

/// Lloyd iterations that leave the `z` farthest points out of every centroid step.
pub fn kmeans_minus_minus(partition: &Partition, config: &BaselineConfig) -> Result<BaselineRun> {
    centralized_means(partition, config, config.z, "kmeans--")
}

/// Farthest-first traversal on the pooled data, scored with `z` outliers.
pub fn centralized_greedy(partition: &Partition, config: &BaselineConfig) -> Result<BaselineRun> {
    check_partition(partition, config)?;
    let all = partition.union();
    let mut ledger = CommLedger::default();
    ledger.charge_upload(partition.n() * config.rule.words_per_point);
    let centers = gonzalez_greedy(&all, config.k, &Metric::Euclidean)?.centers;
    Ok(BaselineRun {
        algorithm: "centralized-greedy",
        solution: center_solution(partition, centers, config.z)?,
        ledger,
        stand_in: false,
    })
}
