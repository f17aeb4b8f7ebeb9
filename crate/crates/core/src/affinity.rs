//! kNN Gaussian affinity graphs, degrees and cut values.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, Assignment, DataMatrix};
use crate::error::{Error, Result};

/// Bandwidth of the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `exp(−‖x_i − x_j‖² / δ²)` with one global `δ`.
    Global(f64),
    /// `exp(−‖x_i − x_j‖² / (δ_i δ_j))` with `δ_i` the distance from `x_i`
    /// to its k-th nearest neighbor.
    SelfTuning,
}

impl Default for ScaleMode {
    fn default() -> Self {
        ScaleMode::SelfTuning
    }
}

impl fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleMode::Global(delta) => write!(f, "global:{delta}"),
            ScaleMode::SelfTuning => f.write_str("self"),
        }
    }
}

impl FromStr for ScaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "self" {
            return Ok(ScaleMode::SelfTuning);
        }
        let delta = s
            .strip_prefix("global:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("scale must be 'self' or 'global:<delta>', got {s:?}"))
            })?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        Ok(ScaleMode::Global(delta))
    }
}

/// Which kNN relations produce an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// Edge when either endpoint lists the other among its neighbors.
    #[default]
    Either,
    /// Edge only when both endpoints list each other.
    Mutual,
}

/// Dense symmetric non-negative weight matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    weights: Vec<f64>,
    n: usize,
    neighbor_count: usize,
}

impl AffinityMatrix {
    /// Wraps a row-major `n × n` matrix after checking it is finite,
    /// non-negative, exactly symmetric and zero on the diagonal.
    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {} weights for {n}x{n}, got {}",
                n * n,
                weights.len()
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "weight ({i}, {j}) = {w} is not a finite non-negative number"
                    )));
                }
                if w != weights[j * n + i] {
                    return Err(Error::InvalidArgument(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(AffinityMatrix {
            weights,
            n,
            neighbor_count: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The k used to build the graph; 0 for matrices built from raw weights.
    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// `𝟙ᵀA𝟙`.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Largest row sum.
    pub fn max_degree(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `degrees[i] = Σ_j A_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(pub Vec<f64>);

/// The `k` nearest other samples of every sample, nearest first, distance
/// ties broken by the lower index.
pub fn knn_sets(x: &DataMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = x.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "neighbor count must lie in [1, n-1] = [1, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    Ok((0..n)
        .map(|i| {
            let xi = x.sample(i);
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, x.sample(j)), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.truncate(k);
            others.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// Gaussian affinity on the kNN graph, symmetrized with the either rule.
pub fn build_affinity(x: &DataMatrix, k: usize, scale: ScaleMode) -> Result<AffinityMatrix> {
    build_affinity_with(x, k, scale, Symmetrization::Either)
}

pub fn build_affinity_with(
    x: &DataMatrix,
    k: usize,
    scale: ScaleMode,
    symmetrization: Symmetrization,
) -> Result<AffinityMatrix> {
    let neighbors = knn_sets(x, k)?;
    let n = x.n();

    let mut is_neighbor = vec![false; n * n];
    for (i, list) in neighbors.iter().enumerate() {
        for &j in list {
            is_neighbor[i * n + j] = true;
        }
    }

    let kernel: Box<dyn Fn(usize, usize) -> f64> = match scale {
        ScaleMode::Global(delta) => {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "global delta must be positive, got {delta}"
                )));
            }
            let denom = delta * delta;
            Box::new(move |i, j| (-sq_dist(x.sample(i), x.sample(j)) / denom).exp())
        }
        ScaleMode::SelfTuning => {
            let mut local: Vec<f64> = neighbors
                .iter()
                .enumerate()
                .map(|(i, list)| sq_dist(x.sample(i), x.sample(list[k - 1])).sqrt())
                .collect();
            let smallest = local
                .iter()
                .copied()
                .filter(|&v| v > 0.0)
                .fold(f64::INFINITY, f64::min);
            if !smallest.is_finite() {
                return Err(Error::Degenerate);
            }
            for v in local.iter_mut().filter(|v| **v == 0.0) {
                *v = smallest;
            }
            Box::new(move |i, j| (-sq_dist(x.sample(i), x.sample(j)) / (local[i] * local[j])).exp())
        }
    };

    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (ij, ji) = (is_neighbor[i * n + j], is_neighbor[j * n + i]);
            let linked = match symmetrization {
                Symmetrization::Either => ij || ji,
                Symmetrization::Mutual => ij && ji,
            };
            if linked {
                let w = kernel(i, j);
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
    }
    Ok(AffinityMatrix {
        weights,
        n,
        neighbor_count: k,
    })
}

pub fn degree_vector(a: &AffinityMatrix) -> DegreeVector {
    DegreeVector((0..a.n()).map(|i| a.row(i).iter().sum()).collect())
}

/// Within-cluster weight `Tr(FᵀAF)` and cut weight `Σ_k q_kᵀ(D − A)q_k`.
/// Each edge counts once per direction.
pub fn cut_value(a: &AffinityMatrix, assignment: &Assignment) -> Result<(f64, f64)> {
    if assignment.n() != a.n() {
        return Err(Error::Shape(format!(
            "assignment has {} labels for a {}-node graph",
            assignment.n(),
            a.n()
        )));
    }
    let labels = assignment.labels();
    let (mut within, mut cut) = (0.0, 0.0);
    for i in 0..a.n() {
        for (j, &w) in a.row(i).iter().enumerate() {
            if labels[i] == labels[j] {
                within += w;
            } else {
                cut += w;
            }
        }
    }
    Ok((within, cut))
}

/// Writes the dense weights as CSV, one matrix row per line.
pub fn write_affinity_csv(a: &AffinityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..a.n()).map(|i| a.row(i).to_vec()).collect();
    let x = DataMatrix::from_samples(&rows)?;
    crate::data::write_csv(&x, path)
}

pub fn read_affinity_csv(path: impl AsRef<Path>) -> Result<AffinityMatrix> {
    let (x, _) = crate::data::load_csv(path, false, None)?;
    if x.d() != x.n() {
        return Err(Error::Shape(format!(
            "affinity CSV is {}x{}, not square",
            x.n(),
            x.d()
        )));
    }
    AffinityMatrix::from_dense(x.n(), x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngSeed;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(xs: &[f64]) -> DataMatrix {
        DataMatrix::from_feature_rows(&[xs.to_vec()]).unwrap()
    }

    #[test]
    fn knn_examples() {
        assert_eq!(knn_sets(&line(&[0.0, 1.0, 10.0]), 1).unwrap(), vec![vec![1], vec![0], vec![1]]);
        let sets = knn_sets(&line(&[0.0, 1.0, 2.0]), 2).unwrap();
        assert_eq!(sets, vec![vec![1, 2], vec![0, 2], vec![1, 0]]);
        // Duplicates at 1 and 2, equidistant from 0.
        assert_eq!(knn_sets(&line(&[0.0, 3.0, 3.0]), 1).unwrap()[0], vec![1]);
        assert!(knn_sets(&line(&[0.0, 1.0]), 2).is_err());
        assert!(knn_sets(&line(&[0.0, 1.0]), 0).is_err());
    }

    #[test]
    fn gaussian_weights() {
        let a = build_affinity(&line(&[0.0, 2.0]), 1, ScaleMode::Global(2.0)).unwrap();
        assert!((a.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.367879).abs() < 1e-6);

        let a = build_affinity(&line(&[0.0, 0.0, 5.0]), 1, ScaleMode::Global(1.0)).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
    }

    #[test]
    fn either_rule_on_a_line() {
        let a = build_affinity(&line(&[0.0, 1.0, 10.0]), 1, ScaleMode::Global(1.0)).unwrap();
        assert_eq!(a.get(0, 1), (-1.0f64).exp());
        assert_eq!(a.get(1, 2), (-81.0f64).exp());
        assert_eq!(a.get(2, 1), (-81.0f64).exp());
        assert_eq!(a.get(0, 2), 0.0);

        let m = build_affinity_with(&line(&[0.0, 1.0, 10.0]), 1, ScaleMode::Global(1.0), Symmetrization::Mutual)
            .unwrap();
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.get(0, 1), (-1.0f64).exp());
    }

    #[test]
    fn self_tuning_uses_local_scales() {
        // k = 1: delta = (1, 1, 9); weight(1,2) = exp(-81 / 9).
        let a = build_affinity(&line(&[0.0, 1.0, 10.0]), 1, ScaleMode::SelfTuning).unwrap();
        assert!((a.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((a.get(1, 2) - (-9.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn self_tuning_zero_scale_substitution() {
        // Samples 0 and 1 coincide so their own scale is 0; it is replaced by
        // the smallest positive scale (sample 2's distance to 0 = 4).
        let a = build_affinity(&line(&[0.0, 0.0, 4.0]), 1, ScaleMode::SelfTuning).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert!((a.get(0, 2) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(a.get(1, 2), 0.0);
        assert!(matches!(
            build_affinity(&line(&[2.0, 2.0, 2.0]), 1, ScaleMode::SelfTuning),
            Err(Error::Degenerate)
        ));
    }

    #[test]
    fn degrees_and_cuts() {
        let a = AffinityMatrix::from_dense(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(degree_vector(&a).0, vec![1.0, 1.0]);
        assert_eq!(cut_value(&a, &Assignment::new(vec![0, 1], 2).unwrap()).unwrap(), (0.0, 2.0));
        assert_eq!(cut_value(&a, &Assignment::new(vec![0, 0], 2).unwrap()).unwrap(), (2.0, 0.0));
        let z = AffinityMatrix::from_dense(3, vec![0.0; 9]).unwrap();
        assert_eq!(degree_vector(&z).0, vec![0.0; 3]);
        assert!(cut_value(&a, &Assignment::new(vec![0, 0, 1], 2).unwrap()).is_err());
    }

    #[test]
    fn from_dense_validation() {
        assert!(AffinityMatrix::from_dense(2, vec![0.0, 1.0, 0.5, 0.0]).is_err());
        assert!(AffinityMatrix::from_dense(2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(AffinityMatrix::from_dense(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn csv_export_round_trip() {
        let (x, _) = crate::data::generate_blobs(2, 6, 3, 1.0, 4.0, RngSeed(5)).unwrap();
        let a = build_affinity(&x, 3, ScaleMode::SelfTuning).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_affinity_csv(&a, f.path()).unwrap();
        let b = read_affinity_csv(f.path()).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn scale_mode_parsing() {
        assert_eq!("self".parse::<ScaleMode>().unwrap(), ScaleMode::SelfTuning);
        assert_eq!("global:2.5".parse::<ScaleMode>().unwrap(), ScaleMode::Global(2.5));
        assert!("global:-1".parse::<ScaleMode>().is_err());
        assert!("local".parse::<ScaleMode>().is_err());
    }

    fn points() -> impl Strategy<Value = (Vec<Vec<f64>>, usize, u64)> {
        (3usize..14, 1usize..4).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n),
                1..n,
                any::<u64>(),
            )
        })
    }

    proptest! {
        #[test]
        fn built_graphs_are_symmetric((rows, k, _) in points(), self_tuning: bool) {
            let x = DataMatrix::from_samples(&rows).unwrap();
            let scale = if self_tuning { ScaleMode::SelfTuning } else { ScaleMode::Global(1.3) };
            let a = build_affinity(&x, k, scale).unwrap();
            for i in 0..a.n() {
                prop_assert_eq!(a.get(i, i), 0.0);
                for j in 0..a.n() {
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&a.get(i, j)));
                }
            }
            let deg = degree_vector(&a).0;
            for j in 0..a.n() {
                let col: f64 = (0..a.n()).map(|i| a.get(i, j)).sum();
                prop_assert!((col - deg[j]).abs() <= 1e-12 * deg[j].max(1.0));
            }
        }

        #[test]
        fn permutation_equivariance((rows, k, seed) in points()) {
            let n = rows.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = RngSeed(seed).rng();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            // Distinct pairwise distances keep kNN tie-breaks out of the picture.
            let rows: Vec<Vec<f64>> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| r.iter().map(|v| v + 1e-3 * (i * i) as f64).collect())
                .collect();
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
            let a = build_affinity(&DataMatrix::from_samples(&rows).unwrap(), k, ScaleMode::Global(1.0)).unwrap();
            let b = build_affinity(&DataMatrix::from_samples(&permuted).unwrap(), k, ScaleMode::Global(1.0)).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
                }
            }
        }

        #[test]
        fn wider_scale_never_lowers_weights((rows, k, _) in points(), lo in 0.1f64..2.0, extra in 0.0f64..3.0) {
            let x = DataMatrix::from_samples(&rows).unwrap();
            let a = build_affinity(&x, k, ScaleMode::Global(lo)).unwrap();
            let b = build_affinity(&x, k, ScaleMode::Global(lo + extra)).unwrap();
            for (wa, wb) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!(wb >= wa);
            }
        }

        #[test]
        fn within_plus_cut_is_total((rows, k, seed) in points(), kc in 1usize..4) {
            let x = DataMatrix::from_samples(&rows).unwrap();
            let a = build_affinity(&x, k, ScaleMode::SelfTuning).unwrap();
            let mut rng = RngSeed(seed).rng();
            let labels: Vec<usize> = (0..x.n()).map(|_| rng.random_range(0..kc)).collect();
            let (within, cut) = cut_value(&a, &Assignment::new(labels, kc).unwrap()).unwrap();
            let total = a.total_weight();
            prop_assert!((within + cut - total).abs() <= 1e-12 * total.max(1.0));
        }
    }
}
