//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use outlier_cluster::aggregate::aggregate;
use outlier_cluster::baselines::{kmeans_minus_minus, random_random, BaselineConfig};
use outlier_cluster::bench::{
    add_synthetic_outliers, gaussian_mixture, planted_kcenter, run_experiment, write_means_csv, write_rows_csv,
    Algorithm, Dataset, ExperimentSpec, Sweep, Vary,
};
use outlier_cluster::coreset::{build_coreset_distributed, build_lgrid, CoresetConfig};
use outlier_cluster::dist_kzc::{dist_kzc_full, dist_kzc_single, DistKzcConfig, LLadder};
use outlier_cluster::geometry::{
    cost_with_outliers, pairwise_extent, ClusteringSolution, Metric, ObjectiveKind, Point, SumObjective,
    WeightedPointSet,
};
use outlier_cluster::kzc::{brute_force_kzcenter, kzc, KzcOutcome};
use outlier_cluster::median_means::{
    cost_truncated_sup, solve_kz_median_means_distributed, verify_grid_chain, PipelineConfig, SupMode,
};
use outlier_cluster::minmax::{reverse_greedy, MinMaxDataset, MinMaxInstance};
use outlier_cluster::partition::Partitioner;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn nearest(p: &[f64], centers: &[Point]) -> f64 {
    centers.iter().map(|c| dist(p, c.coords())).fold(f64::INFINITY, f64::min)
}

/// Largest distance to `centers` after dropping the `drop` farthest points.
fn radius_after_dropping(points: &[Point], centers: &[Point], drop: usize) -> f64 {
    let mut d: Vec<f64> = points.iter().map(|p| nearest(p.coords(), centers)).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    d.get(drop).copied().unwrap_or(0.0)
}

fn ceil_bicriteria(eps: f64, z: usize) -> usize {
    ((1.0 + eps) * z as f64 - 1e-9).ceil().max(0.0) as usize
}

struct PlantedRun {
    points: Vec<Point>,
    k: usize,
    z: usize,
    eps: f64,
    l: f64,
    centers: Vec<Point>,
}

fn planted_runs() -> &'static (Vec<PlantedRun>, Duration) {
    static RUNS: OnceLock<(Vec<PlantedRun>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let runs = (0..50u64)
            .into_par_iter()
            .map(|s| {
                let k = 1 + (s % 3) as usize;
                let z = (s * 7 % 21) as usize;
                let m = 2 + (s % 3) as usize;
                let eps = [0.25, 0.5, 1.0][(s / 3 % 3) as usize];
                let inliers = if s % 2 == 0 { 60 + (s * 13 % 41) as usize } else { 150 + (s * 37 % 331) as usize };
                let dim = 2 + (s % 2) as usize;
                let inst = planted_kcenter(inliers, k, z, dim, 1000 + s).unwrap();
                let part = Partitioner::Random.split(&inst.points, m, s).unwrap();
                let mut config = DistKzcConfig::new(k, z, eps, dim);
                config.seed = s;
                let report = dist_kzc_full(&config, &part).unwrap();
                PlantedRun {
                    points: inst.points,
                    k,
                    z,
                    eps,
                    l: report.l,
                    centers: report.centers,
                }
            })
            .collect();
        (runs, start.elapsed())
    })
}

fn criterion_1() -> Verdict {
    let (runs, elapsed) = planted_runs();
    let mut violations = 0;
    for r in runs {
        assert!(r.points.len() <= 500 && r.k <= 3 && r.z <= 20);
        let beyond = r.points.iter().filter(|p| nearest(p.coords(), &r.centers) > 24.0 * r.l).count();
        if beyond > ceil_bicriteria(r.eps, r.z) || r.centers.len() > r.k {
            violations += 1;
        }
    }
    let pass = violations == 0 && *elapsed < Duration::from_secs(120);
    verdict(
        pass,
        format!("{} instances, {violations} violations, {:.1}s", runs.len(), elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Verdict {
    let (runs, _) = planted_runs();
    let oracle: Vec<&PlantedRun> = runs.iter().filter(|r| r.points.len() <= 120).collect();
    let ratios: Vec<(f64, f64)> = oracle
        .par_iter()
        .map(|r| {
            let unit = WeightedPointSet::unit(r.points.clone());
            let best = brute_force_kzcenter(&unit, r.k, r.z as f64, &Metric::Euclidean, None, u128::MAX).unwrap();
            let radius = radius_after_dropping(&r.points, &r.centers, ceil_bicriteria(r.eps, r.z));
            (radius, best.objective)
        })
        .collect();
    let within_bound = ratios.iter().filter(|(r, opt)| *r <= 24.0 * opt).count();
    let within_four = ratios.iter().filter(|(r, opt)| *r <= 4.0 * opt).count();
    let pass = !ratios.is_empty() && within_bound == ratios.len() && within_four * 10 >= ratios.len() * 9;
    let worst = ratios.iter().map(|(r, o)| if *o > 0.0 { r / o } else { 0.0 }).fold(0.0, f64::max);
    verdict(
        pass,
        format!(
            "{} oracle instances, {within_bound} within 24L*, {within_four} within 4L*, worst ratio {worst:.3}",
            ratios.len()
        ),
    )
}

fn criterion_3() -> Verdict {
    let (k, m, eps, dim) = (2, 3, 0.5, 2);
    let inst = planted_kcenter(300, k, 64, dim, 77).unwrap();
    let part = Partitioner::Random.split(&inst.points, m, 5).unwrap();
    let mut caps = Vec::new();
    let mut runs = 0;
    let mut mismatches = Vec::new();
    let mut round_one = Vec::new();
    for z in [4usize, 16, 64] {
        let config = DistKzcConfig::new(k, z, eps, dim);
        let cap = 2 * m + (k as f64 * m as f64 * (1.0 + 1.0 / eps)) as usize * (dim + 1);
        caps.push(cap);
        let y = eps * z as f64 / (k * m) as f64;
        let gate = (k * m) as f64 * (1.0 + 1.0 / eps);
        let ladder = LLadder::for_partition(&part, eps, &Metric::Euclidean).global_values();
        for l in ladder {
            let outcome = dist_kzc_single(l, &config, &part).unwrap();
            let sizes: usize = part
                .parts()
                .iter()
                .map(|p| aggregate(p, l, y, &Metric::Euclidean).unwrap().summary.len())
                .sum();
            let expected = if sizes as f64 <= gate { m + m + sizes * (dim + 1) } else { m };
            let words = outcome.ledger.total_words;
            if words != expected || words > cap {
                mismatches.push(format!("z={z} L={l}: {words} words, expected {expected}, cap {cap}"));
            }
            round_one.push(outcome.ledger.words_in_round(1));
            runs += 1;
        }
    }
    let caps_agree = caps.windows(2).all(|w| w[0] == w[1]);
    let round_one_agrees = round_one.iter().all(|&w| w == m);
    let pass = mismatches.is_empty() && caps_agree && round_one_agrees;
    verdict(
        pass,
        format!(
            "{runs} single-guess runs over z in {{4,16,64}}, cap {} words, {} mismatches{}",
            caps[0],
            mismatches.len(),
            mismatches.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
        ),
    )
}

fn criterion_4() -> Verdict {
    let results: Vec<(usize, usize, usize)> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(4000 + s);
            let n = r.random_range(2..=60);
            let k = r.random_range(1..=3);
            let dim = r.random_range(1..=3);
            let fractional = s % 2 == 1;
            let pts: Vec<Point> = (0..n)
                .map(|i| Point::new(i as u64, (0..dim).map(|_| r.random_range(-20.0..20.0)).collect()).unwrap())
                .collect();
            let weights: Vec<f64> = (0..n)
                .map(|_| if fractional { r.random_range(0.1..4.0) } else { r.random_range(1..=4) as f64 })
                .collect();
            let q = WeightedPointSet::new(pts, weights).unwrap();
            let z = r.random_range(0.0..q.total_weight() / 2.0);
            let opt = brute_force_kzcenter(&q, k, z, &Metric::Euclidean, None, u128::MAX).unwrap().objective;
            let mut guesses = vec![opt, opt * (1.0 - 1e-9), opt / 2.0, opt / 4.0, opt * 1.5];
            guesses.extend((0..5).map(|_| r.random_range(0.0..2.0 * opt.max(1e-9))));
            let (mut checks, mut bad, mut yes) = (0, 0, 0);
            for l in guesses {
                checks += 1;
                match kzc(k, z, &q, l, &Metric::Euclidean).unwrap() {
                    KzcOutcome::No => {
                        if opt <= l {
                            bad += 1;
                        }
                    }
                    KzcOutcome::Centers(c) => {
                        yes += 1;
                        let mut d: Vec<(f64, f64)> = q.iter().map(|(p, w)| (nearest(p.coords(), &c), w)).collect();
                        d.sort_by(|a, b| b.0.total_cmp(&a.0));
                        let mut dropped = 0.0;
                        let mut radius = 0.0;
                        for (dd, w) in d {
                            if dropped + w > z {
                                radius = dd;
                                break;
                            }
                            dropped += w;
                        }
                        if radius > 4.0 * l || c.len() > k {
                            bad += 1;
                        }
                    }
                }
            }
            (checks, bad, yes)
        })
        .collect();
    let checks: usize = results.iter().map(|r| r.0).sum();
    let bad: usize = results.iter().map(|r| r.1).sum();
    let yes: usize = results.iter().map(|r| r.2).sum();
    verdict(
        bad == 0,
        format!("200 instances, {checks} guesses ({yes} with centers), {bad} violations"),
    )
}

fn criterion_5() -> Verdict {
    let results: Vec<(usize, usize)> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let k = 1 + (s % 3) as usize;
            let z = (s * 3 % 21) as usize;
            let m = 2 + (s % 3) as usize;
            let eps = [0.25, 0.5, 1.0][(s % 4 % 3) as usize];
            let inst = planted_kcenter(40 + (s * 17 % 160) as usize, k, z, 2, 5000 + s).unwrap();
            let outlier_ids: Vec<u64> = inst.outliers.iter().map(|&i| inst.points[i].id).collect();
            let part = Partitioner::Random.split(&inst.points, m, s).unwrap();
            let y = eps * z as f64 / (k * m) as f64;
            let centers: Vec<Point> = inst
                .cluster_centers
                .iter()
                .enumerate()
                .map(|(j, c)| Point::new(j as u64, c.clone()).unwrap())
                .collect();
            let (mut checks, mut bad) = (0, 0);
            for p in part.parts() {
                let z_hat = p.iter().filter(|q| outlier_ids.contains(&q.id)).count();
                let witness = ClusteringSolution {
                    centers: centers.clone(),
                    objective: 1.0,
                    outliers_allowed: z_hat as f64,
                    kind: ObjectiveKind::CenterRadius,
                };
                for l in [1.0, 1.5] {
                    checks += 1;
                    let res = aggregate(p, l, y, &Metric::Euclidean).unwrap();
                    let bound = if z_hat == 0 { k as f64 } else { k as f64 + z_hat as f64 / y };
                    let lemma = outlier_cluster::aggregate::verify_qprime_bound(&res, p, &witness, y, l, &Metric::Euclidean)
                        .unwrap();
                    if res.summary.len() as f64 > bound || !lemma || !res.violations(p, l, y, &Metric::Euclidean).is_empty() {
                        bad += 1;
                    }
                }
            }
            (checks, bad)
        })
        .collect();
    let checks: usize = results.iter().map(|r| r.0).sum();
    let bad: usize = results.iter().map(|r| r.1).sum();
    verdict(bad == 0, format!("100 instances, {checks} machine runs, {bad} violations"))
}

fn criterion_6() -> Verdict {
    let results: Vec<(f64, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(6000 + s);
            let n = r.random_range(2..=40);
            let dim = r.random_range(1..=3);
            let pts: Vec<Point> = (0..n)
                .map(|i| Point::new(i as u64, (0..dim).map(|_| r.random_range(-30.0..30.0)).collect()).unwrap())
                .collect();
            let weights: Vec<f64> =
                (0..n).map(|_| if s % 2 == 0 { 1.0 } else { r.random_range(0.05..3.0) }).collect();
            let centers: Vec<Point> = (0..r.random_range(1..=4))
                .map(|i| Point::new(i as u64, (0..dim).map(|_| r.random_range(-40.0..40.0)).collect()).unwrap())
                .collect();
            let obj = if r.random_bool(0.5) { SumObjective::Means } else { SumObjective::Median };
            let set = WeightedPointSet::new(pts.clone(), weights).unwrap();
            let z = r.random_range(0.0..set.total_weight());
            let sup = cost_truncated_sup(&set, &centers, z, obj, SupMode::Real, &Metric::Euclidean).unwrap();
            let direct = cost_with_outliers(&set, &centers, z, obj, &Metric::Euclidean).unwrap();
            let rel = (sup - direct).abs() / direct.abs().max(sup.abs()).max(f64::MIN_POSITIVE);

            let eps: f64 = r.random_range(0.05..0.95);
            let chain = match pairwise_extent(&pts, &Metric::Euclidean) {
                None => true,
                Some(e) => {
                    let limit = n as f64 / (1.0 + eps).powi(obj.exponent());
                    let z_chain = r.random_range(0.0..limit * 0.999);
                    let grid = build_lgrid(e.d_min, e.d_max, n, eps).unwrap();
                    let metric = Metric::clamped_for(e.d_min, e.d_max, n, eps);
                    let unit = WeightedPointSet::unit(pts);
                    verify_grid_chain(&unit, &centers, z_chain, obj, eps, &grid, &metric).unwrap()
                }
            };
            (if direct == 0.0 && sup.abs() < 1e-9 { 0.0 } else { rel }, chain)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let identity_fail = results.iter().filter(|r| r.0 > 1e-9).count();
    let chain_fail = results.iter().filter(|r| !r.1).count();
    verdict(
        identity_fail == 0 && chain_fail == 0,
        format!("1000 instances, worst relative gap {worst:.2e}, {identity_fail} identity and {chain_fail} grid-chain failures"),
    )
}

fn criterion_7() -> Verdict {
    let (k, m, eps) = (2, 4, 0.3);
    let inst = planted_kcenter(1000, k, 0, 2, 7).unwrap();
    let part = Partitioner::Random.split(&inst.points, m, 7).unwrap();
    let n = inst.points.len();
    let e = pairwise_extent(&inst.points, &Metric::Euclidean).unwrap();
    let grid = build_lgrid(e.d_min, e.d_max, n, eps).unwrap();
    let metric = Metric::clamped_for(e.d_min, e.d_max, n, eps);
    let mut config = CoresetConfig::new(k, eps, SumObjective::Means, 2);
    config.grid_len = grid.len();
    let (lo, hi) = inst.points.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(mut lo, mut hi), p| {
        for j in 0..2 {
            lo[j] = lo[j].min(p.coords()[j]);
            hi[j] = hi[j].max(p.coords()[j]);
        }
        (lo, hi)
    });
    let full = WeightedPointSet::unit(inst.points.clone());
    let per_l: Vec<(f64, usize, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(j, &l)| {
            let (coreset, _) = build_coreset_distributed(&part, l, &config, &metric, 700 + j as u64).unwrap();
            let drift = (coreset.set.total_weight() - n as f64).abs();
            let truncated = metric.truncated(l);
            let mut r = rng(7000 + j as u64);
            let mut good = 0;
            for _ in 0..200 {
                let centers: Vec<Point> = (0..k)
                    .map(|i| {
                        let c = (0..2).map(|d| r.random_range(lo[d] - 10.0..hi[d] + 10.0)).collect();
                        Point::new(i as u64, c).unwrap()
                    })
                    .collect();
                let a = cost_with_outliers(&coreset.set, &centers, 0.0, SumObjective::Means, &truncated).unwrap();
                let b = cost_with_outliers(&full, &centers, 0.0, SumObjective::Means, &truncated).unwrap();
                let ratio = if b == 0.0 { if a == 0.0 { 1.0 } else { f64::INFINITY } } else { a / b };
                if (0.7..=1.3).contains(&ratio) {
                    good += 1;
                }
            }
            (l, good, drift)
        })
        .collect();
    let weakest = per_l.iter().min_by_key(|r| r.1).unwrap();
    let max_drift = per_l.iter().map(|r| r.2).fold(0.0, f64::max);
    let pass = per_l.iter().all(|r| r.1 >= 190) && max_drift <= 1e-6 * n as f64;
    verdict(
        pass,
        format!(
            "{} thresholds x 200 center sets, weakest threshold {} with {}/200 in [0.7, 1.3], max weight drift {max_drift:.1e}",
            per_l.len(),
            weakest.0,
            weakest.1
        ),
    )
}

fn mixture(seed: u64) -> Vec<Point> {
    let base = gaussian_mixture(1950, 4, 2, 2.0, 100.0, seed).unwrap();
    add_synthetic_outliers(&base, 50, 3.0, seed + 100).unwrap().points
}

fn criterion_8() -> Verdict {
    let (k, z, m, eps) = (4, 50, 5, 0.3);
    let per_seed: Vec<(f64, f64)> = (1..=5u64)
        .map(|s| {
            let part = Partitioner::Random.split(&mixture(s), m, s).unwrap();
            let mut config = PipelineConfig::new(k, z, SumObjective::Means, eps, 2);
            config.seed = s;
            let pipeline = solve_kz_median_means_distributed(&part, &config).unwrap();
            let mut base = BaselineConfig::new(k, z, m, 2);
            base.seed = s;
            let kmm = kmeans_minus_minus(&part, &base).unwrap();
            (pipeline.objective_at_bicriteria_z, kmm.solution.objective)
        })
        .collect();
    let wins = per_seed.iter().filter(|(p, b)| p <= b).count();

    let part = Partitioner::Random.split(&mixture(1), m, 1).unwrap();
    let ledgers: Vec<_> = [25usize, 50, 100]
        .iter()
        .map(|&z| {
            let mut config = PipelineConfig::new(k, z, SumObjective::Means, eps, 2);
            config.seed = 1;
            solve_kz_median_means_distributed(&part, &config).unwrap().ledger
        })
        .collect();
    let flat = ledgers.windows(2).all(|w| w[0] == w[1]);
    let sampled: Vec<usize> = [25usize, 50, 100]
        .iter()
        .map(|&z| random_random(&part, &BaselineConfig::new(k, z, m, 2)).unwrap().ledger.total_words)
        .collect();
    let linear = sampled.iter().zip([25usize, 50, 100]).all(|(&w, z)| w == m * (k + z) * 2);
    verdict(
        wins >= 4 && flat && linear,
        format!(
            "pipeline at bicriteria count beat k-means-- on {wins}/5 seeds; pipeline ledger {} words for every z: {flat}; sampling ledger {sampled:?} linear in z: {linear}",
            ledgers[0].total_words
        ),
    )
}

fn brute_delta(dataset: &MinMaxDataset, pool: &[Point], alive: &[bool], v: usize, obj: SumObjective) -> f64 {
    let cost = |skip: Option<usize>| -> f64 {
        dataset
            .set
            .iter()
            .map(|(p, w)| {
                let d = pool
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| alive[*j] && Some(*j) != skip)
                    .map(|(_, c)| dataset.metric.dist(p.coords(), c.coords()))
                    .fold(f64::INFINITY, f64::min);
                w * obj.power(d)
            })
            .sum()
    };
    dataset.scale * (cost(Some(v)) - cost(None))
}

fn criterion_9() -> Verdict {
    let line = |v: &[f64]| -> Vec<Point> {
        v.iter().enumerate().map(|(i, &x)| Point::new(i as u64, vec![x]).unwrap()).collect()
    };
    let hand = MinMaxInstance::new(
        vec![MinMaxDataset::plain(WeightedPointSet::unit(line(&[0.0, 1.0, 10.0])), Metric::Euclidean)],
        SumObjective::Means,
        1,
    )
    .with_pool(line(&[0.0, 1.0, 10.0]));
    let hand_ok = reverse_greedy(&hand, 1e6)
        .map(|s| s.centers.len() == 1 && s.centers[0].coords() == [1.0])
        .unwrap_or(false);

    let (mut runs, mut feasible, mut bad_size, mut worst_identity, mut bad_delta) = (0, 0, 0, 0.0f64, 0);
    for s in 0..300u64 {
        let mut r = rng(9000 + s);
        let datasets: Vec<MinMaxDataset> = (0..r.random_range(1..=3))
            .map(|_| {
                let n = r.random_range(1..=8);
                let pts = line(&(0..n).map(|_| r.random_range(-50.0..50.0)).collect::<Vec<_>>());
                let w = (0..n).map(|_| r.random_range(0.5..3.0)).collect();
                let metric = if r.random_bool(0.5) { Metric::Euclidean } else { Metric::Euclidean.truncated(15.0) };
                MinMaxDataset::plain(WeightedPointSet::new(pts, w).unwrap(), metric)
            })
            .collect();
        let pool = line(&(0..r.random_range(2..=10)).map(|_| r.random_range(-50.0..50.0)).collect::<Vec<_>>());
        let k = r.random_range(1..=pool.len());
        let obj = if r.random_bool(0.5) { SumObjective::Means } else { SumObjective::Median };
        let budget = 10f64.powf(r.random_range(0.0..5.0));
        let inst = MinMaxInstance::new(datasets, obj, k).with_pool(pool.clone());
        runs += 1;
        let Ok(sol) = reverse_greedy(&inst, budget) else { continue };
        feasible += 1;
        let step = (1.0 + 1.0 / budget).ln();
        let mut alive = vec![true; pool.len()];
        if sol.centers.len() != k || sol.trace.removed.len() != pool.len() - k {
            bad_size += 1;
        }
        for (t, &v) in sol.trace.removed.iter().enumerate() {
            if sol.trace.sizes[t] != pool.len() - t {
                bad_size += 1;
            }
            for (i, d) in inst.datasets.iter().enumerate() {
                let delta = sol.trace.deltas[t][i];
                let exact = brute_delta(d, &pool, &alive, v, obj);
                if (delta - exact).abs() > 1e-9 * (1.0 + exact.abs()) || delta > budget / 2.0 {
                    bad_delta += 1;
                }
                let growth = sol.trace.log_weights[t + 1][i] - sol.trace.log_weights[t][i];
                worst_identity = worst_identity.max((growth - delta * step).abs());
            }
            alive[v] = false;
        }
    }
    let pass = hand_ok && bad_size == 0 && bad_delta == 0 && worst_identity <= 1e-12;
    verdict(
        pass,
        format!(
            "hand trace gives {{1}}: {hand_ok}; {feasible}/{runs} fuzz runs feasible, {bad_size} size and {bad_delta} removal-cost errors, weight identity error {worst_identity:.1e}"
        ),
    )
}

fn criterion_10() -> Verdict {
    let inst = planted_kcenter(240, 3, 12, 2, 10).unwrap();
    let rows: Vec<Vec<f64>> = inst.points.iter().map(|p| p.coords().to_vec()).collect();
    let spec = ExperimentSpec {
        algorithms: Algorithm::ALL.to_vec(),
        dataset: Dataset::from_rows("planted", &rows, "planted").unwrap(),
        k: 3,
        z: 12,
        eps: 0.3,
        machines: 4,
        seeds: vec![1, 2, 3],
        partitioner: Partitioner::Random,
        sweep: Some(Sweep {
            vary: Vary::Z,
            values: vec![6, 12],
        }),
        timings: false,
    };
    let render = || {
        let res = run_experiment(&spec).unwrap();
        let mut out = Vec::new();
        write_rows_csv(&spec, &res, &mut out).unwrap();
        write_means_csv(&res, &mut out).unwrap();
        out
    };
    let parallel = render();
    let again = render();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(render);
    let identical = parallel == again && parallel == serial;
    verdict(
        identical,
        format!(
            "{} algorithms x 2 z values x 3 seeds, {} bytes, identical across reruns and thread counts: {identical}",
            spec.algorithms.len(),
            parallel.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("dist-kzc soundness", criterion_1),
        ("approximation against brute force", criterion_2),
        ("single-guess communication", criterion_3),
        ("greedy cover contract", criterion_4),
        ("aggregation bound", criterion_5),
        ("supremum identity and grid chain", criterion_6),
        ("coreset quality", criterion_7),
        ("end-to-end means pipeline", criterion_8),
        ("reverse-greedy mechanics", criterion_9),
        ("deterministic output", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s)",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
