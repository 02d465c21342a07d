use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{self, BaselineConfig, BaselineRun};
use crate::dist_kzc::{dist_kzc_full, DistKzcConfig};
use crate::error::{invalid, Error, Result};
use crate::geometry::{objective_value, Metric, ObjectiveKind, SumObjective};
use crate::median_means::{solve_kz_median_means_distributed, PipelineConfig};
use crate::partition::{Partition, Partitioner};
use crate::rng::derive_seed;

use super::dataset::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "String")]
pub enum Algorithm {
    DistKzc,
    RandomRandom,
    RandomKzc,
    MkcwmStyle,
    CentralizedGreedy,
    LloydKmeans,
    KmeansMinusMinus,
    KzMeans,
    KzMedian,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::DistKzc,
        Algorithm::RandomRandom,
        Algorithm::RandomKzc,
        Algorithm::MkcwmStyle,
        Algorithm::CentralizedGreedy,
        Algorithm::LloydKmeans,
        Algorithm::KmeansMinusMinus,
        Algorithm::KzMeans,
        Algorithm::KzMedian,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::DistKzc => "dist-kzc",
            Algorithm::RandomRandom => "random-random",
            Algorithm::RandomKzc => "random-kzc",
            Algorithm::MkcwmStyle => "mkcwm-style",
            Algorithm::CentralizedGreedy => "centralized-greedy",
            Algorithm::LloydKmeans => "lloyd-kmeans",
            Algorithm::KmeansMinusMinus => "kmeans--",
            Algorithm::KzMeans => "kz-means",
            Algorithm::KzMedian => "kz-median",
        }
    }

    pub fn kind(self) -> ObjectiveKind {
        match self {
            Algorithm::LloydKmeans | Algorithm::KmeansMinusMinus | Algorithm::KzMeans => {
                ObjectiveKind::MeansSumOfSquares
            }
            Algorithm::KzMedian => ObjectiveKind::MedianSum,
            _ => ObjectiveKind::CenterRadius,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> Self {
        a.id().to_string()
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

fn kind_label(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::CenterRadius => "center",
        ObjectiveKind::MedianSum => "median",
        ObjectiveKind::MeansSumOfSquares => "means",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Vary {
    K,
    Z,
}

impl FromStr for Vary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Vary::K),
            "z" => Ok(Vary::Z),
            other => Err(invalid(format!("can only vary k or z, not {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub vary: Vary,
    pub values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Algorithm>,
    pub dataset: Dataset,
    pub k: usize,
    pub z: usize,
    pub eps: f64,
    pub machines: usize,
    pub seeds: Vec<u64>,
    pub partitioner: Partitioner,
    pub sweep: Option<Sweep>,
    /// Adds a wall-clock column; output is then no longer reproducible byte for byte.
    pub timings: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithm selected"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("no seeds given"));
        }
        if self.machines == 0 {
            return Err(invalid("need at least one machine"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.contains(&0) {
                return Err(invalid("sweep values must be a nonempty list of positive integers"));
            }
        }
        Ok(())
    }

    /// `(k, z)` settings in sweep order.
    pub fn settings(&self) -> Vec<(usize, usize)> {
        match &self.sweep {
            None => vec![(self.k, self.z)],
            Some(Sweep { vary: Vary::K, values }) => values.iter().map(|&k| (k, self.z)).collect(),
            Some(Sweep { vary: Vary::Z, values }) => values.iter().map(|&z| (self.k, z)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub z: usize,
    pub seed: u64,
    pub objective_at_z: Option<f64>,
    pub objective_at_bicriteria_z: Option<f64>,
    pub bicriteria_outliers: Option<f64>,
    pub total_words: Option<usize>,
    pub rounds: Option<usize>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub z: usize,
    pub runs: usize,
    pub failures: usize,
    pub objective_at_z: Option<f64>,
    pub objective_at_bicriteria_z: Option<f64>,
    pub total_words: Option<f64>,
    pub rounds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub means: Vec<MeanRow>,
}

impl ExperimentResult {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(ResultRow::succeeded)
    }
}

struct Outcome {
    objective_at_z: f64,
    objective_at_bicriteria_z: Option<f64>,
    bicriteria_outliers: Option<f64>,
    total_words: usize,
    rounds: usize,
}

fn from_baseline(run: BaselineRun, partition: &Partition, z: usize) -> Result<Outcome> {
    let objective_at_z = objective_value(
        &partition.union(),
        &run.solution.centers,
        z as f64,
        run.solution.kind,
        &Metric::Euclidean,
    )?;
    Ok(Outcome {
        objective_at_z,
        objective_at_bicriteria_z: None,
        bicriteria_outliers: None,
        total_words: run.ledger.total_words,
        rounds: run.ledger.rounds,
    })
}

fn run_one(algorithm: Algorithm, partition: &Partition, k: usize, z: usize, eps: f64, seed: u64) -> Result<Outcome> {
    let dim = partition.dim();
    let mut base = BaselineConfig::new(k, z, partition.machines(), dim);
    base.seed = seed;
    let baseline = |f: fn(&Partition, &BaselineConfig) -> Result<BaselineRun>| from_baseline(f(partition, &base)?, partition, z);
    match algorithm {
        Algorithm::DistKzc => {
            let mut config = DistKzcConfig::new(k, z, eps, dim);
            config.seed = seed;
            let r = dist_kzc_full(&config, partition)?;
            Ok(Outcome {
                objective_at_z: r.objective_at_z,
                objective_at_bicriteria_z: Some(r.objective_at_bicriteria_z),
                bicriteria_outliers: Some(r.bicriteria_outliers),
                total_words: r.ledger.total_words,
                rounds: r.ledger.rounds,
            })
        }
        Algorithm::KzMeans | Algorithm::KzMedian => {
            let objective = if algorithm == Algorithm::KzMeans {
                SumObjective::Means
            } else {
                SumObjective::Median
            };
            let mut config = PipelineConfig::new(k, z, objective, eps, dim);
            config.seed = seed;
            let r = solve_kz_median_means_distributed(partition, &config)?;
            Ok(Outcome {
                objective_at_z: r.objective_at_z,
                objective_at_bicriteria_z: Some(r.objective_at_bicriteria_z),
                bicriteria_outliers: Some(r.bicriteria_outliers),
                total_words: r.ledger.total_words,
                rounds: r.ledger.rounds,
            })
        }
        Algorithm::RandomRandom => baseline(baselines::random_random),
        Algorithm::RandomKzc => baseline(baselines::random_kzc),
        Algorithm::MkcwmStyle => baseline(baselines::mkcwm_style),
        Algorithm::CentralizedGreedy => baseline(baselines::centralized_greedy),
        Algorithm::LloydKmeans => baseline(baselines::lloyd_kmeans),
        Algorithm::KmeansMinusMinus => baseline(baselines::kmeans_minus_minus),
    }
}

/// Runs every (setting, algorithm, seed) combination in parallel. A failing
/// run becomes a row carrying its error message.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for (k, z) in spec.settings() {
        for &algorithm in &spec.algorithms {
            for &seed in &spec.seeds {
                jobs.push((algorithm, k, z, seed));
            }
        }
    }
    let rows: Vec<ResultRow> = jobs
        .into_par_iter()
        .map(|(algorithm, k, z, seed)| {
            let start = Instant::now();
            let outcome = spec
                .partitioner
                .split(&spec.dataset.points, spec.machines, seed)
                .and_then(|p| run_one(algorithm, &p, k, z, spec.eps, derive_seed(seed, 1)));
            let wall_ms = spec.timings.then(|| start.elapsed().as_secs_f64() * 1e3);
            match outcome {
                Ok(o) => ResultRow {
                    algorithm,
                    k,
                    z,
                    seed,
                    objective_at_z: Some(o.objective_at_z),
                    objective_at_bicriteria_z: o.objective_at_bicriteria_z,
                    bicriteria_outliers: o.bicriteria_outliers,
                    total_words: Some(o.total_words),
                    rounds: Some(o.rounds),
                    wall_ms,
                    error: None,
                },
                Err(e) => ResultRow {
                    algorithm,
                    k,
                    z,
                    seed,
                    objective_at_z: None,
                    objective_at_bicriteria_z: None,
                    bicriteria_outliers: None,
                    total_words: None,
                    rounds: None,
                    wall_ms,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let means = summarize(&rows);
    Ok(ExperimentResult { rows, means })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// One row per `(algorithm, k, z)` in first-appearance order, averaging the successful runs.
pub fn summarize(rows: &[ResultRow]) -> Vec<MeanRow> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(Algorithm, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.algorithm, r.k, r.z);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let all = &groups[&key];
            let ok: Vec<&&ResultRow> = all.iter().filter(|r| r.succeeded()).collect();
            MeanRow {
                algorithm: key.0,
                k: key.1,
                z: key.2,
                runs: ok.len(),
                failures: all.len() - ok.len(),
                objective_at_z: mean_of(ok.iter().map(|r| r.objective_at_z)),
                objective_at_bicriteria_z: mean_of(ok.iter().map(|r| r.objective_at_bicriteria_z)),
                total_words: mean_of(ok.iter().map(|r| r.total_words.map(|w| w as f64))),
                rounds: mean_of(ok.iter().map(|r| r.rounds.map(|w| w as f64))),
            }
        })
        .collect()
}

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// One line per run.
pub fn write_rows_csv<W: Write>(spec: &ExperimentSpec, result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "algorithm",
        "dataset",
        "objective_kind",
        "k",
        "z",
        "eps",
        "machines",
        "partition",
        "seed",
        "objective_at_z",
        "objective_at_bicriteria_z",
        "bicriteria_outliers",
        "total_words",
        "rounds",
    ];
    if spec.timings {
        header.push("wall_ms");
    }
    header.push("error");
    w.write_record(&header)?;
    for r in &result.rows {
        let mut rec = vec![
            r.algorithm.to_string(),
            spec.dataset.name.clone(),
            kind_label(r.algorithm.kind()).to_string(),
            r.k.to_string(),
            r.z.to_string(),
            spec.eps.to_string(),
            spec.machines.to_string(),
            spec.partitioner.to_string(),
            r.seed.to_string(),
            cell(&r.objective_at_z),
            cell(&r.objective_at_bicriteria_z),
            cell(&r.bicriteria_outliers),
            cell(&r.total_words),
            cell(&r.rounds),
        ];
        if spec.timings {
            rec.push(cell(&r.wall_ms));
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per `(algorithm, k, z)` with means over seeds.
pub fn write_means_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "k",
        "z",
        "runs",
        "failures",
        "mean_objective_at_z",
        "mean_objective_at_bicriteria_z",
        "mean_total_words",
        "mean_rounds",
    ])?;
    for m in &result.means {
        w.write_record([
            m.algorithm.to_string(),
            m.k.to_string(),
            m.z.to_string(),
            m.runs.to_string(),
            m.failures.to_string(),
            cell(&m.objective_at_z),
            cell(&m.objective_at_bicriteria_z),
            cell(&m.total_words),
            cell(&m.rounds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(spec: &ExperimentSpec, result: &ExperimentResult) -> serde_json::Value {
    serde_json::json!({
        "dataset": {
            "name": spec.dataset.name,
            "provenance": spec.dataset.provenance,
            "n": spec.dataset.n(),
            "dim": spec.dataset.dim(),
            "synthetic_outliers": spec.dataset.synthetic_outliers,
        },
        "algorithms": spec.algorithms,
        "k": spec.k,
        "z": spec.z,
        "eps": spec.eps,
        "machines": spec.machines,
        "partition": spec.partitioner.to_string(),
        "seeds": spec.seeds,
        "sweep": spec.sweep,
        "stand_ins": spec.algorithms.iter().filter(|a| **a == Algorithm::MkcwmStyle).collect::<Vec<_>>(),
        "rows": result.rows.len(),
        "failures": result.rows.iter().filter(|r| !r.succeeded()).count(),
        "means": result.means,
    })
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || invalid(format!("cannot read seeds from {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

/// Parses a comma-separated list of positive integers.
pub fn parse_values(s: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| invalid(format!("cannot read {x:?} as a positive integer"))))
        .collect::<Result<_>>()?;
    if values.is_empty() || values.contains(&0) {
        return Err(invalid("sweep values must be positive"));
    }
    Ok(values)
}
