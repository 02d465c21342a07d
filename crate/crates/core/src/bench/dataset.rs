use std::io::Read;
use std::path::Path;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{euclidean, Point};
use crate::rng::seeded;

/// A rectangular numeric table of finite values, one point per row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset {
    pub name: String,
    pub points: Vec<Point>,
    pub provenance: String,
    /// Trailing rows appended by [`add_synthetic_outliers`].
    pub synthetic_outliers: usize,
}

impl Dataset {
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], provenance: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(invalid("rows need at least one column"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Ragged {
                    row: i + 1,
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        let points = crate::geometry::points_from_rows(rows)?;
        Ok(Self {
            name: name.into(),
            points,
            provenance: provenance.into(),
            synthetic_outliers: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.coords().to_vec()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub skip_header: bool,
    /// 1-based column numbers to ignore.
    pub drop_columns: Vec<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            skip_header: false,
            drop_columns: Vec::new(),
        }
    }
}

pub fn ingest_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let file = std::fs::File::open(path)?;
    let mut ds = ingest_reader(file, &name, options)?;
    ds.provenance = format!("csv {}", path.display());
    Ok(ds)
}

/// Parse errors report 1-based line and column numbers of the source text.
pub fn ingest_reader<R: Read>(reader: R, name: &str, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if i == 0 && options.skip_header {
            continue;
        }
        let line = record.position().map_or(i as u64 + 1, |p| p.line()) as usize;
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            if options.drop_columns.contains(&(j + 1)) {
                continue;
            }
            let x: f64 = cell.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| Error::Parse {
                row: line,
                col: j + 1,
                value: cell.to_string(),
            })?;
            row.push(x);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Ragged {
                    row: line,
                    expected: w,
                    found: row.len(),
                })
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    Dataset::from_rows(name, &rows, format!("csv {name}"))
}

/// Appends `count` points drawn uniformly from the data's bounding box scaled
/// by `spread` about its middle, redrawing any that land within the data's
/// radius around its centroid.
pub fn add_synthetic_outliers(dataset: &Dataset, count: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Ok(dataset.clone());
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(invalid(format!("spread must be positive, got {spread}")));
    }
    let rows = dataset.rows();
    let dim = dataset.dim();
    let n = rows.len() as f64;
    let mut lo = rows[0].clone();
    let mut hi = rows[0].clone();
    let mut centroid = vec![0.0; dim];
    for r in &rows {
        for j in 0..dim {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
            centroid[j] += r[j] / n;
        }
    }
    let radius = rows.iter().map(|r| euclidean(r, &centroid)).fold(0.0, f64::max);
    let widest = (0..dim).map(|j| hi[j] - lo[j]).fold(0.0, f64::max);
    let half: Vec<f64> = (0..dim)
        .map(|j| spread * if widest > 0.0 { (hi[j] - lo[j]).max(widest * 1e-3) } else { 1.0 } / 2.0)
        .collect();
    let mid: Vec<f64> = (0..dim).map(|j| (lo[j] + hi[j]) / 2.0).collect();
    let mut rng = seeded(seed);
    let mut out = dataset.clone();
    let first_id = dataset.points.iter().map(|p| p.id).max().map_or(0, |m| m + 1);
    for id in first_id..first_id + count as u64 {
        let mut x: Vec<f64> = Vec::new();
        for _ in 0..10_000 {
            x = (0..dim).map(|j| mid[j] + half[j] * rng.random_range(-1.0..=1.0)).collect();
            if euclidean(&x, &centroid) > radius {
                break;
            }
        }
        let d = euclidean(&x, &centroid);
        if d <= radius {
            // Push a stubborn draw radially past the data radius.
            let target = radius * 1.01 + f64::EPSILON;
            if d > 0.0 {
                x.iter_mut().zip(&centroid).for_each(|(v, c)| *v = c + (*v - c) * target / d);
            } else {
                x = centroid.clone();
                x[0] += target;
            }
        }
        out.points.push(Point::new(id, x)?);
    }
    out.synthetic_outliers += count;
    out.provenance = format!("{} + {count} synthetic outliers (spread {spread}, seed {seed})", dataset.provenance);
    Ok(out)
}
