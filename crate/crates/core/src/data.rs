//! Data containers shared by both algorithms: the sample matrix, hard
//! assignments, cluster sizes, seeds, CSV ingestion and synthetic blobs.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed for every stochastic operation. Same seed and inputs give
/// bit-identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

/// Samples as columns of a `d × n` matrix. Column `j` is stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    d: usize,
    n: usize,
}

impl DataMatrix {
    /// Builds a matrix from column-major storage (sample after sample).
    pub fn from_columns(d: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Empty);
        }
        if values.len() != d * n {
            return Err(Error::Shape(format!(
                "expected {} values for a {d}x{n} matrix, got {}",
                d * n,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at feature {}, sample {}",
                pos % d,
                pos / d
            )));
        }
        Ok(DataMatrix { values, d, n })
    }

    /// Builds a matrix from one slice per sample.
    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(d * n);
        for (j, s) in samples.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != d {
                return Err(Error::Shape(format!(
                    "sample {j} has {} features, expected {d}",
                    s.len()
                )));
            }
            values.extend_from_slice(s);
        }
        Self::from_columns(d, n, values)
    }

    /// Builds a matrix from feature rows (`rows[f][j]` is feature `f` of sample `j`).
    pub fn from_feature_rows<S: AsRef<[f64]>>(rows: &[S]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != n) {
            return Err(Error::Shape("feature rows differ in length".into()));
        }
        let mut values = vec![0.0; d * n];
        for (f, row) in rows.iter().enumerate() {
            for (j, &v) in row.as_ref().iter().enumerate() {
                values[j * d + f] = v;
            }
        }
        Self::from_columns(d, n, values)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.values[j * self.d..(j + 1) * self.d]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, feature: usize, sample: usize) -> f64 {
        self.values[sample * self.d + feature]
    }

    /// Column-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Hard clustering: one label in `[0, k)` per sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {l} at position {i} is out of range for K = {k}"
            )));
        }
        Ok(Assignment { labels, k })
    }

    /// Uses `max(label) + 1` as the cluster count.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub(crate) fn set(&mut self, i: usize, label: usize) {
        debug_assert!(label < self.k);
        self.labels[i] = label;
    }

    /// Row-major `n × K` one-hot view of the assignment.
    pub fn one_hot(&self) -> Vec<Vec<u8>> {
        self.labels
            .iter()
            .map(|&l| {
                let mut row = vec![0u8; self.k];
                row[l] = 1;
                row
            })
            .collect()
    }

    pub fn sizes(&self) -> ClusterSizes {
        cluster_sizes(self)
    }
}

/// Number of samples per cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterSizes(pub Vec<usize>);

impl ClusterSizes {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn min(&self) -> usize {
        self.0.iter().copied().min().unwrap_or(0)
    }

    pub fn has_empty(&self) -> bool {
        self.0.contains(&0)
    }
}

impl std::ops::Index<usize> for ClusterSizes {
    type Output = usize;

    fn index(&self, k: usize) -> &usize {
        &self.0[k]
    }
}

pub fn cluster_sizes(a: &Assignment) -> ClusterSizes {
    let mut sizes = vec![0usize; a.k()];
    for &l in a.labels() {
        sizes[l] += 1;
    }
    ClusterSizes(sizes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    UniformRandom,
    BalancedRandom,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitMode::UniformRandom => f.write_str("uniform"),
            InitMode::BalancedRandom => f.write_str("balanced"),
        }
    }
}

/// Random initial assignment with no empty cluster.
///
/// `UniformRandom` draws labels i.i.d. and then moves one random point into
/// each empty cluster, taking it from a cluster that keeps at least one member.
/// `BalancedRandom` shuffles a multiset holding each label `⌊n/K⌋` or `⌈n/K⌉` times.
pub fn init_assignment(n: usize, k: usize, mode: InitMode, seed: RngSeed) -> Result<Assignment> {
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if n < k {
        return Err(Error::TooFewSamples { n, k });
    }
    let mut rng = seed.rng();
    let labels = match mode {
        InitMode::UniformRandom => {
            let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l] += 1;
            }
            for empty in 0..k {
                if sizes[empty] > 0 {
                    continue;
                }
                let donors: Vec<usize> = (0..n).filter(|&i| sizes[labels[i]] > 1).collect();
                let i = donors[rng.random_range(0..donors.len())];
                sizes[labels[i]] -= 1;
                labels[i] = empty;
                sizes[empty] = 1;
            }
            labels
        }
        InitMode::BalancedRandom => {
            let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
            labels.shuffle(&mut rng);
            labels
        }
    };
    Assignment::new(labels, k)
}

/// Isotropic Gaussian blobs with exactly `per_cluster` samples each.
///
/// Centers are pairwise at least `separation` apart. When `K ≤ d` they sit on
/// distinct signed coordinate axes at radius `separation / √2`, so every pair
/// is exactly `separation` apart; otherwise they are rejection-sampled in a box.
/// Samples are emitted cluster by cluster.
pub fn generate_blobs(
    k: usize,
    per_cluster: usize,
    d: usize,
    spread: f64,
    separation: f64,
    seed: RngSeed,
) -> Result<(DataMatrix, Assignment)> {
    if k == 0 || per_cluster == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "K, per_cluster and d must all be at least 1".into(),
        ));
    }
    if !(spread > 0.0 && spread.is_finite() && separation > 0.0 && separation.is_finite()) {
        return Err(Error::InvalidArgument(
            "spread and separation must be positive and finite".into(),
        ));
    }
    let mut rng = seed.rng();
    let centers = place_centers(k, d, separation, &mut rng);
    let noise = Normal::new(0.0, spread).expect("positive std");
    let n = k * per_cluster;
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            values.extend(center.iter().map(|&m| m + noise.sample(&mut rng)));
            labels.push(c);
        }
    }
    Ok((DataMatrix::from_columns(d, n, values)?, Assignment::new(labels, k)?))
}

fn place_centers(k: usize, d: usize, separation: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if k <= d {
        let mut axes: Vec<usize> = (0..d).collect();
        axes.shuffle(rng);
        let radius = separation / std::f64::consts::SQRT_2;
        return axes[..k]
            .iter()
            .map(|&axis| {
                let mut c = vec![0.0; d];
                c[axis] = if rng.random_bool(0.5) { radius } else { -radius };
                c
            })
            .collect();
    }
    let mut half_width = separation * (k as f64).powf(1.0 / d as f64);
    let min_sq = separation * separation;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut failures = 0;
    while centers.len() < k {
        let cand: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        if centers.iter().all(|c| sq_dist(c, &cand) >= min_sq) {
            centers.push(cand);
            failures = 0;
        } else {
            failures += 1;
            if failures == 1000 {
                half_width *= 1.5;
                failures = 0;
            }
        }
    }
    centers
}

/// Loads samples from a row-per-sample CSV file.
///
/// When `label_column` is set, that column is split off and densified to
/// `[0, C)` in order of first appearance. Integer-valued labels are keyed by
/// value (so `2` and `02` coincide); anything else by its trimmed text.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<(DataMatrix, Option<Assignment>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut width = None;
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let row_offset = usize::from(has_header);

    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + row_offset;
        // Skip fully blank lines.
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Ragged {
                row,
                expected,
                found: record.len(),
            });
        }
        if let Some(lc) = label_column {
            if lc >= expected {
                return Err(Error::InvalidArgument(format!(
                    "label column {lc} out of range for {expected} columns"
                )));
            }
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_column {
                let key = match cell.parse::<i64>() {
                    Ok(v) => format!("#{v}"),
                    Err(_) => cell.to_string(),
                };
                let next = label_ids.len();
                raw_labels.push(*label_ids.entry(key).or_insert(next));
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: c,
                        value: cell.to_string(),
                    })
                }
            }
        }
    }

    let width = width.ok_or(Error::Empty)?;
    let d = width - usize::from(label_column.is_some());
    if d == 0 {
        return Err(Error::Empty);
    }
    let n = values.len() / d;
    let x = DataMatrix::from_columns(d, n, values)?;
    let labels = match label_column {
        Some(_) => Some(Assignment::new(raw_labels, label_ids.len().max(1))?),
        None => None,
    };
    Ok((x, labels))
}

/// Writes samples one per row; values use the shortest round-trip decimal form.
pub fn write_csv(x: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    for sample in x.samples() {
        let line = sample
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
