//! Splitting a point set across simulated machines.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{check_dims, Point, WeightedPointSet};
use crate::rng::seeded;

/// The split of `P` into `P_1..P_m`; `parts[i]` lives on machine `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    parts: Vec<Vec<Point>>,
}

impl Partition {
    pub fn new(parts: Vec<Vec<Point>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(invalid("a partition needs at least one machine"));
        }
        let all: Vec<Point> = parts.iter().flatten().cloned().collect();
        if all.is_empty() {
            return Err(invalid("a partition needs at least one point"));
        }
        check_dims(&all)?;
        Ok(Self { parts })
    }

    pub fn machines(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[Vec<Point>] {
        &self.parts
    }

    pub fn part(&self, machine: usize) -> &[Point] {
        &self.parts[machine]
    }

    pub fn n(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.parts
            .iter()
            .flatten()
            .next()
            .map(Point::dim)
            .expect("partition is nonempty")
    }

    pub fn all_points(&self) -> Vec<Point> {
        self.parts.iter().flatten().cloned().collect()
    }

    pub fn union(&self) -> WeightedPointSet {
        WeightedPointSet::unit(self.all_points())
    }

    pub fn into_parts(self) -> Vec<Vec<Point>> {
        self.parts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partitioner {
    RoundRobin,
    Random,
    /// Sort by the first coordinate and cut into contiguous blocks.
    SortedSkew,
}

impl std::str::FromStr for Partitioner {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round-robin" => Ok(Partitioner::RoundRobin),
            "random" => Ok(Partitioner::Random),
            "sorted-skew" => Ok(Partitioner::SortedSkew),
            other => Err(invalid(format!("unknown partitioner {other:?}"))),
        }
    }
}

impl std::fmt::Display for Partitioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Partitioner::RoundRobin => "round-robin",
            Partitioner::Random => "random",
            Partitioner::SortedSkew => "sorted-skew",
        })
    }
}

impl Partitioner {
    pub fn split(self, points: &[Point], machines: usize, seed: u64) -> Result<Partition> {
        if machines == 0 {
            return Err(invalid("need at least one machine"));
        }
        if points.len() < machines {
            return Err(invalid(format!(
                "cannot spread {} points over {machines} machines",
                points.len()
            )));
        }
        let mut parts = vec![Vec::new(); machines];
        match self {
            Partitioner::RoundRobin => {
                for (i, p) in points.iter().enumerate() {
                    parts[i % machines].push(p.clone());
                }
            }
            Partitioner::Random => {
                let mut shuffled = points.to_vec();
                shuffled.shuffle(&mut seeded(seed));
                for (i, p) in shuffled.into_iter().enumerate() {
                    parts[i % machines].push(p);
                }
            }
            Partitioner::SortedSkew => {
                let mut sorted = points.to_vec();
                sorted.sort_by(|a, b| a.coords()[0].total_cmp(&b.coords()[0]));
                for (chunk, part) in even_chunks(sorted, machines).into_iter().zip(&mut parts) {
                    *part = chunk;
                }
            }
        }
        Partition::new(parts)
    }
}

/// Splits into `count` contiguous chunks whose sizes differ by at most one.
pub(crate) fn even_chunks<T>(items: Vec<T>, count: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let mut out = Vec::with_capacity(count);
    let mut iter = items.into_iter();
    for i in 0..count {
        let size = n / count + usize::from(i < n % count);
        out.push(iter.by_ref().take(size).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::line_points;

    #[test]
    fn partitioners_conserve_points() {
        let pts = line_points(&(0..23).map(f64::from).collect::<Vec<_>>());
        for p in [Partitioner::RoundRobin, Partitioner::Random, Partitioner::SortedSkew] {
            let part = p.split(&pts, 4, 7).unwrap();
            assert_eq!(part.n(), 23);
            let mut ids: Vec<_> = part.all_points().iter().map(|q| q.id).collect();
            ids.sort();
            assert_eq!(ids, (0..23).collect::<Vec<_>>());
            let sizes: Vec<_> = part.parts().iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn sorted_skew_is_contiguous() {
        let pts = line_points(&[5.0, 1.0, 4.0, 2.0, 3.0, 0.0]);
        let part = Partitioner::SortedSkew.split(&pts, 2, 0).unwrap();
        let first: Vec<f64> = part.part(0).iter().map(|p| p.coords()[0]).collect();
        assert_eq!(first, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn random_split_is_seeded() {
        let pts = line_points(&(0..50).map(f64::from).collect::<Vec<_>>());
        let a = Partitioner::Random.split(&pts, 3, 11).unwrap();
        let b = Partitioner::Random.split(&pts, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_more_machines_than_points() {
        let pts = line_points(&[0.0]);
        assert!(Partitioner::RoundRobin.split(&pts, 2, 0).is_err());
    }
}
