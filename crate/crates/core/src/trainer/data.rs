//! Small synthetic and CSV classification datasets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed, rng_from, stream, Rng};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    TwoSpirals,
    Blobs,
    Circles,
    Checkerboard,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub kind: DatasetKind,
    pub train: usize,
    pub val: usize,
    #[serde(default)]
    pub test: usize,
    #[serde(default = "two")]
    pub classes: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn two() -> usize {
    2
}

impl DatasetRef {
    pub fn two_spirals(train: usize, val: usize, test: usize, noise: f64, seed: u64) -> Self {
        DatasetRef {
            kind: DatasetKind::TwoSpirals,
            train,
            val,
            test,
            classes: 2,
            noise,
            seed,
            path: None,
        }
    }

    pub fn synthetic(kind: DatasetKind, sizes: (usize, usize, usize), classes: usize, noise: f64, seed: u64) -> Self {
        DatasetRef {
            kind,
            train: sizes.0,
            val: sizes.1,
            test: sizes.2,
            classes,
            noise,
            seed,
            path: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    /// Row-major features, `len() == n * features`.
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize, features: usize) -> &[f64] {
        &self.x[i * features..(i + 1) * features]
    }

    fn push(&mut self, x: &[f64], y: usize) {
        self.x.extend_from_slice(x);
        self.y.push(y);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: usize,
    pub classes: usize,
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Csv { path: PathBuf, line: usize, msg: String },
}

/// Builds the dataset a reference describes. Synthetic kinds draw an equal
/// number of points per class for every split; features are standardized
/// with the training split's mean and standard deviation.
pub fn generate_dataset(r: &DatasetRef) -> Result<Dataset, DataError> {
    if r.classes < 2 {
        return Err(DataError::Invalid(format!(
            "need at least 2 classes, got {}",
            r.classes
        )));
    }
    if r.train == 0 || r.val == 0 {
        return Err(DataError::Invalid("train and val sizes must be positive".into()));
    }
    if !r.noise.is_finite() || r.noise < 0.0 {
        return Err(DataError::Invalid(format!(
            "noise must be finite and >= 0, got {}",
            r.noise
        )));
    }
    let mut ds = match r.kind {
        DatasetKind::Csv => {
            let path = r
                .path
                .as_deref()
                .ok_or_else(|| DataError::Invalid("csv dataset needs a path".into()))?;
            from_csv(path, r)?
        }
        kind => synthetic(kind, r),
    };
    standardize(&mut ds);
    Ok(ds)
}

fn synthetic(kind: DatasetKind, r: &DatasetRef) -> Dataset {
    let mut out = Dataset {
        features: 2,
        classes: r.classes,
        train: Split::default(),
        val: Split::default(),
        test: Split::default(),
    };
    let splits = [(0u64, r.train), (1, r.val), (2, r.test)];
    for (tag, n) in splits {
        let mut rng = rng_from(derive_seed(r.seed, stream::DATASET, tag));
        let mut split = Split::default();
        for i in 0..n {
            let class = i % r.classes;
            let p = sample_point(kind, class, r, &mut rng);
            split.push(&p, class);
        }
        match tag {
            0 => out.train = split,
            1 => out.val = split,
            _ => out.test = split,
        }
    }
    out
}

fn sample_point(kind: DatasetKind, class: usize, r: &DatasetRef, rng: &mut Rng) -> [f64; 2] {
    let noise = Normal::new(0.0, r.noise.max(f64::MIN_POSITIVE)).expect("valid deviation");
    let jitter = |rng: &mut Rng| if r.noise > 0.0 { noise.sample(rng) } else { 0.0 };
    match kind {
        DatasetKind::TwoSpirals => {
            // Arms of 2.25 turns, class c rotated by 2 pi c / classes.
            let t: f64 = rng.random_range(0.25f64..1.0).sqrt();
            let angle = t * 4.5 * PI + 2.0 * PI * class as f64 / r.classes as f64;
            let radius = t;
            [radius * angle.cos() + jitter(rng), radius * angle.sin() + jitter(rng)]
        }
        DatasetKind::Blobs => {
            let a = 2.0 * PI * class as f64 / r.classes as f64;
            let g = Normal::new(0.0, 1.0).expect("unit normal");
            [
                5.0 * a.cos() + g.sample(rng) + jitter(rng),
                5.0 * a.sin() + g.sample(rng) + jitter(rng),
            ]
        }
        DatasetKind::Circles => {
            let a = rng.random_range(0.0..2.0 * PI);
            let radius = 1.0 + class as f64;
            [radius * a.cos() + jitter(rng), radius * a.sin() + jitter(rng)]
        }
        DatasetKind::Checkerboard => loop {
            let x: f64 = rng.random_range(-2.0..2.0);
            let y: f64 = rng.random_range(-2.0..2.0);
            let cell = (x.floor() as i64 + y.floor() as i64).rem_euclid(r.classes as i64) as usize;
            if cell == class {
                break [x + jitter(rng), y + jitter(rng)];
            }
        },
        DatasetKind::Csv => unreachable!("csv rows are read, not sampled"),
    }
}

fn from_csv(path: &Path, r: &DatasetRef) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let csv_err = |line: usize, msg: String| DataError::Csv {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| csv_err(1, "missing header row".into()))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(csv_err(1, "need at least one feature column and a label column".into()));
    }
    let features = columns - 1;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns {
            return Err(csv_err(
                i + 1,
                format!("expected {columns} columns, found {}", cells.len()),
            ));
        }
        let mut x = Vec::with_capacity(features);
        for (c, cell) in cells[..features].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(i + 1, format!("column {}: `{cell}` is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(csv_err(i + 1, format!("column {}: non-finite value", c + 1)));
            }
            x.push(v);
        }
        let label = cells[features];
        let y: usize = label
            .parse()
            .map_err(|_| csv_err(i + 1, format!("label `{label}` is not a class index")))?;
        if y >= r.classes {
            return Err(csv_err(
                i + 1,
                format!("label {y} is not below classes = {}", r.classes),
            ));
        }
        rows.push((x, y));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); r.classes];
    for (i, (_, y)) in rows.iter().enumerate() {
        by_class[*y].push(i);
    }
    let mut rng = rng_from(derive_seed(r.seed, stream::DATASET, 3));
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
    }
    let per_val = r.val / r.classes;
    let per_test = r.test / r.classes;
    let mut ds = Dataset {
        features,
        classes: r.classes,
        train: Split::default(),
        val: Split::default(),
        test: Split::default(),
    };
    let mut rest = Vec::new();
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < per_val + per_test + 1 {
            return Err(DataError::Invalid(format!(
                "class {c} has {} rows, needs more than {} for balanced val/test splits",
                idx.len(),
                per_val + per_test
            )));
        }
        for &i in &idx[..per_val] {
            ds.val.push(&rows[i].0, c);
        }
        for &i in &idx[per_val..per_val + per_test] {
            ds.test.push(&rows[i].0, c);
        }
        rest.extend_from_slice(&idx[per_val + per_test..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    rest.truncate(r.train);
    for i in rest {
        ds.train.push(&rows[i].0, rows[i].1);
    }
    Ok(ds)
}

fn standardize(ds: &mut Dataset) {
    let f = ds.features;
    let n = ds.train.len() as f64;
    for j in 0..f {
        let mean = (0..ds.train.len()).map(|i| ds.train.x[i * f + j]).sum::<f64>() / n;
        let var = (0..ds.train.len())
            .map(|i| (ds.train.x[i * f + j] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for split in [&mut ds.train, &mut ds.val, &mut ds.test] {
            for i in 0..split.len() {
                split.x[i * f + j] = (split.x[i * f + j] - mean) / sd;
            }
        }
    }
}
