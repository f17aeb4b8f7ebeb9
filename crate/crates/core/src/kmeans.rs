//! Balanced k-means.
//!
//! Minimizes
//!
//! ```text
//! J(H, F) = ‖X − HFᵀ‖²_F + γ·Tr(Fᵀ𝟙𝟙ᵀF) = Σ_i ‖x_i − h_{label(i)}‖² + γ·Σ_k n_k²
//! ```
//!
//! by alternating two exact block updates:
//!
//! 1. `H` given `F`: each column is the mean of its cluster (`XF(FᵀF)⁻¹`, with
//!    `FᵀF = diag(n_k)`).
//! 2. `F` given `H`: rows are revisited one at a time. Holding every other
//!    row fixed, putting row `i` in cluster `k` costs
//!    `‖x_i − h_k‖² + γ·((m_k + 1)² − m_k²) = ‖x_i − h_k‖² + γ·(2m_k + 1)`,
//!    where `m_k` is the size of cluster `k` without row `i`.
//!
//! Neither step can increase `J`, so the recorded objective never goes up.
//! With `γ = 0` the row rule is the nearest-centroid rule and one outer
//! iteration is exactly one Lloyd iteration.

use serde::{Deserialize, Serialize};

use crate::data::{init_assignment, sq_dist, Assignment, DataMatrix, InitMode, RngSeed};
use crate::error::{Error, Result};
use crate::penalty::{exclusive_lasso_penalty, PenaltyWeight};
use crate::trace::{ObjectiveTrace, TraceRecord};

/// Cluster centers as columns of a `d × K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    values: Vec<f64>,
    d: usize,
    k: usize,
}

impl Centroids {
    pub fn from_columns(d: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * k {
            return Err(Error::Shape(format!(
                "expected {} centroid values for {d}x{k}, got {}",
                d * k,
                values.len()
            )));
        }
        Ok(Centroids { values, d, k })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.d..(k + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub gamma: PenaltyWeight,
    pub max_outer_iters: usize,
    pub max_sweeps_per_f_update: usize,
    pub rel_tol: f64,
    pub seed: RngSeed,
    pub init_mode: InitMode,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            gamma: PenaltyWeight::ZERO,
            max_outer_iters: 300,
            max_sweeps_per_f_update: 100,
            rel_tol: 1e-8,
            seed: RngSeed(0),
            init_mode: InitMode::UniformRandom,
        }
    }
}

impl KmeansConfig {
    fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.max_sweeps_per_f_update == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits must be at least 1".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansObjective {
    pub fit: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub assignment: Assignment,
    pub centroids: Centroids,
    pub trace: ObjectiveTrace,
    pub converged: bool,
}

fn check_shapes(x: &DataMatrix, a: &Assignment, h: Option<&Centroids>) -> Result<()> {
    if a.n() != x.n() {
        return Err(Error::Shape(format!(
            "assignment has {} labels for {} samples",
            a.n(),
            x.n()
        )));
    }
    if let Some(h) = h {
        if h.d() != x.d() || h.k() != a.k() {
            return Err(Error::Shape(format!(
                "centroids are {}x{}, expected {}x{}",
                h.d(),
                h.k(),
                x.d(),
                a.k()
            )));
        }
    }
    Ok(())
}

pub fn kmeans_objective(
    x: &DataMatrix,
    a: &Assignment,
    h: &Centroids,
    gamma: PenaltyWeight,
) -> Result<KmeansObjective> {
    check_shapes(x, a, Some(h))?;
    let fit: f64 = x
        .samples()
        .zip(a.labels())
        .map(|(xi, &l)| sq_dist(xi, h.column(l)))
        .sum();
    let penalty = gamma.value() * exclusive_lasso_penalty(&a.sizes()) as f64;
    Ok(KmeansObjective {
        fit,
        penalty,
        total: fit + penalty,
    })
}

/// Per-cluster means.
///
/// An empty cluster is re-seeded at the sample farthest from the mean of its
/// own cluster (lowest index on ties). Samples already used to re-seed are not
/// reused when several clusters are empty.
pub fn update_centroids(x: &DataMatrix, a: &Assignment) -> Result<Centroids> {
    check_shapes(x, a, None)?;
    let (d, k) = (x.d(), a.k());
    let mut sums = vec![0.0; d * k];
    let mut counts = vec![0usize; k];
    for (xi, &l) in x.samples().zip(a.labels()) {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(xi) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= inv);
        }
    }
    if counts.contains(&0) {
        let means = sums.clone();
        let own_dist: Vec<f64> = x
            .samples()
            .zip(a.labels())
            .map(|(xi, &l)| sq_dist(xi, &means[l * d..(l + 1) * d]))
            .collect();
        let mut used = vec![false; x.n()];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let pick = farthest_unused(&own_dist, &used).unwrap_or(0);
            used[pick] = true;
            sums[c * d..(c + 1) * d].copy_from_slice(x.sample(pick));
        }
    }
    Centroids::from_columns(d, k, sums)
}

fn farthest_unused(dist: &[f64], used: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in dist.iter().enumerate() {
        if used[i] {
            continue;
        }
        if best.is_none_or(|b| v > dist[b]) {
            best = Some(i);
        }
    }
    best
}

/// One pass over the rows in ascending order, each moved to the cluster that
/// minimizes its share of the objective given the current partial assignment.
/// Returns the number of rows whose label changed.
pub fn sweep_rows(
    x: &DataMatrix,
    a: &Assignment,
    h: &Centroids,
    gamma: PenaltyWeight,
) -> Result<(Assignment, usize)> {
    check_shapes(x, a, Some(h))?;
    let mut out = a.clone();
    let mut sizes = a.sizes().0;
    let changed = sweep_in_place(x, &mut out, &mut sizes, h, gamma.value());
    Ok((out, changed))
}

fn sweep_in_place(
    x: &DataMatrix,
    a: &mut Assignment,
    sizes: &mut [usize],
    h: &Centroids,
    gamma: f64,
) -> usize {
    let mut changed = 0;
    for (i, xi) in x.samples().enumerate() {
        let current = a.label(i);
        sizes[current] -= 1;
        let best = best_cluster(xi, h, sizes, gamma);
        sizes[best] += 1;
        if best != current {
            a.set(i, best);
            changed += 1;
        }
    }
    changed
}

/// `argmin_k ‖x − h_k‖² + γ(2m_k + 1)` with `m_k = sizes[k]` excluding the row.
fn best_cluster(xi: &[f64], h: &Centroids, sizes: &[usize], gamma: f64) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (k, &m) in sizes.iter().enumerate() {
        let cost = sq_dist(xi, h.column(k)) + gamma * (2 * m + 1) as f64;
        if cost < best_cost {
            best_cost = cost;
            best = k;
        }
    }
    best
}

/// One outer iteration: centroid update, then row sweeps until nothing
/// changes or `max_sweeps` passes have run. Returns the new assignment, the
/// centroids the sweeps used, and the total number of label changes.
pub fn outer_iteration(
    x: &DataMatrix,
    a: &Assignment,
    gamma: PenaltyWeight,
    max_sweeps: usize,
) -> Result<(Assignment, Centroids, usize)> {
    let h = update_centroids(x, a)?;
    let mut next = a.clone();
    let mut sizes = next.sizes().0;
    let mut changed = 0;
    for _ in 0..max_sweeps {
        let c = sweep_in_place(x, &mut next, &mut sizes, &h, gamma.value());
        changed += c;
        if c == 0 {
            break;
        }
    }
    Ok((next, h, changed))
}

/// Balanced k-means from a seeded random start.
pub fn fit_balanced_kmeans(x: &DataMatrix, k: usize, cfg: &KmeansConfig) -> Result<KmeansFit> {
    cfg.validate()?;
    if k == 0 || x.n() < k {
        return Err(Error::TooFewSamples { n: x.n(), k });
    }
    let init = init_assignment(x.n(), k, cfg.init_mode, cfg.seed)?;
    fit_balanced_kmeans_from(x, init, cfg)
}

/// Balanced k-means from a given starting assignment. `cfg.seed` and
/// `cfg.init_mode` are ignored.
///
/// Stops when an outer iteration changes no label, or when the relative
/// decrease of the total falls below `rel_tol` while no cluster is empty,
/// or after `max_outer_iters` iterations.
pub fn fit_balanced_kmeans_from(
    x: &DataMatrix,
    init: Assignment,
    cfg: &KmeansConfig,
) -> Result<KmeansFit> {
    cfg.validate()?;
    check_shapes(x, &init, None)?;
    let mut a = init;
    let mut trace = ObjectiveTrace::default();
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut centroids = None;

    for iteration in 0..cfg.max_outer_iters {
        let (next, h, changed) = outer_iteration(x, &a, cfg.gamma, cfg.max_sweeps_per_f_update)?;
        let obj = kmeans_objective(x, &next, &h, cfg.gamma)?;
        trace.records.push(TraceRecord {
            iteration,
            data_term: obj.fit,
            penalty: obj.penalty,
            total: obj.total,
            shifted_total: None,
        });
        a = next;
        centroids = Some(h);
        let small_decrease =
            previous.is_some_and(|p| p - obj.total <= cfg.rel_tol * p.abs());
        if changed == 0 || (small_decrease && !a.sizes().has_empty()) {
            converged = true;
            break;
        }
        previous = Some(obj.total);
    }

    Ok(KmeansFit {
        assignment: a,
        centroids: centroids.expect("at least one outer iteration"),
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;
    use crate::penalty::most_balanced_value;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> DataMatrix {
        DataMatrix::from_feature_rows(&[xs.to_vec()]).unwrap()
    }

    fn asg(labels: &[usize], k: usize) -> Assignment {
        Assignment::new(labels.to_vec(), k).unwrap()
    }

    fn cents(cols: &[f64]) -> Centroids {
        Centroids::from_columns(1, cols.len(), cols.to_vec()).unwrap()
    }

    fn gamma(g: f64) -> PenaltyWeight {
        PenaltyWeight::new(g).unwrap()
    }

    #[test]
    fn objective_examples() {
        let x = line(&[0.0, 2.0]);
        let o = kmeans_objective(&x, &asg(&[0, 1], 2), &cents(&[0.0, 2.0]), gamma(1.0)).unwrap();
        assert_eq!((o.fit, o.penalty, o.total), (0.0, 2.0, 2.0));

        let o = kmeans_objective(&x, &asg(&[0, 0], 2), &cents(&[1.0, 99.0]), gamma(0.0)).unwrap();
        assert_eq!((o.fit, o.penalty), (2.0, 0.0));

        let x = line(&[0.0, 1.0, 10.0, 11.0]);
        let a = asg(&[0, 0, 1, 1], 2);
        let h = update_centroids(&x, &a).unwrap();
        assert_eq!(h.as_slice(), &[0.5, 10.5]);
        assert_eq!(kmeans_objective(&x, &a, &h, gamma(0.0)).unwrap().fit, 1.0);
    }

    #[test]
    fn objective_shape_mismatch() {
        let x = line(&[0.0, 2.0]);
        assert!(kmeans_objective(&x, &asg(&[0, 1, 1], 2), &cents(&[0.0, 2.0]), gamma(0.0)).is_err());
        assert!(kmeans_objective(&x, &asg(&[0, 1], 2), &cents(&[0.0, 2.0, 3.0]), gamma(0.0)).is_err());
    }

    #[test]
    fn centroid_means_and_reseed() {
        let x = line(&[0.0, 2.0, 4.0, 6.0]);
        assert_eq!(update_centroids(&x, &asg(&[0, 0, 1, 1], 2)).unwrap().as_slice(), &[1.0, 5.0]);
        // Samples 0 and 3 tie at distance 3 from the mean; index 0 wins.
        assert_eq!(update_centroids(&x, &asg(&[0, 0, 0, 0], 2)).unwrap().as_slice(), &[3.0, 0.0]);
        // Two empty clusters take distinct samples.
        assert_eq!(
            update_centroids(&x, &asg(&[0, 0, 0, 0], 3)).unwrap().as_slice(),
            &[3.0, 0.0, 6.0]
        );
    }

    #[test]
    fn centroids_follow_relabeling() {
        let (x, _) = generate_blobs(3, 4, 2, 1.0, 5.0, RngSeed(3)).unwrap();
        let a = crate::data::init_assignment(x.n(), 3, InitMode::UniformRandom, RngSeed(9)).unwrap();
        let perm = [2, 0, 1];
        let relabeled = asg(&a.labels().iter().map(|&l| perm[l]).collect::<Vec<_>>(), 3);
        let h = update_centroids(&x, &a).unwrap();
        let hp = update_centroids(&x, &relabeled).unwrap();
        for k in 0..3 {
            assert_eq!(h.column(k), hp.column(perm[k]));
        }
    }

    #[test]
    fn sweep_nearest_centroid_at_zero_gamma() {
        let x = line(&[0.0, 0.9, 5.0]);
        let (a, changed) = sweep_rows(&x, &asg(&[0, 0, 1], 2), &cents(&[0.0, 5.0]), gamma(0.0)).unwrap();
        assert_eq!(a.labels(), &[0, 0, 1]);
        assert_eq!(changed, 0);
    }

    #[test]
    fn sweep_moves_row_for_balance() {
        // Rows 0..2 stay in cluster 0 (their costs favour it); row 3 moves.
        let x = line(&[0.0, 0.1, 0.2, 5.0]);
        let h = cents(&[0.1, 5.0]);
        let start = asg(&[0, 0, 0, 1], 2);
        let g = gamma(12.0);

        // Row 2 (x = 0.2) with m = (2, 1): c0 = 0.01 + 12·5, c1 = 23.04 + 12·3.
        let c0: f64 = 0.01 + 12.0 * 5.0;
        let c1: f64 = 23.04 + 12.0 * 3.0;
        assert!(c1 < c0);
        let stay = kmeans_objective(&x, &start, &h, g).unwrap().total;
        let moved = kmeans_objective(&x, &asg(&[0, 0, 1, 1], 2), &h, g).unwrap().total;
        assert!(moved < stay);
        assert!(((stay - moved) - (c0 - c1)).abs() < 1e-9);

        let (a, changed) = sweep_rows(&x, &start, &h, g).unwrap();
        assert_eq!(a.label(2), 1);
        assert!(changed >= 1);
    }

    #[test]
    fn fit_reaches_global_optimum_on_line() {
        let x = line(&[0.0, 1.0, 10.0, 11.0]);
        for seed in 0..20 {
            for mode in [InitMode::UniformRandom, InitMode::BalancedRandom] {
                let cfg = KmeansConfig { seed: RngSeed(seed), init_mode: mode, ..Default::default() };
                let fit = fit_balanced_kmeans(&x, 2, &cfg).unwrap();
                assert_eq!(fit.trace.last().unwrap().total, 1.0);
                assert_eq!(fit.assignment.sizes().as_slice(), &[2, 2]);
            }
        }
    }

    #[test]
    fn fit_rejects_too_few_samples() {
        let x = line(&[0.0, 1.0]);
        assert!(matches!(
            fit_balanced_kmeans(&x, 3, &KmeansConfig::default()),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn huge_gamma_balances() {
        for seed in 0..30 {
            let (x, _) = generate_blobs(3, 4, 2, 1.0, 2.0, RngSeed(seed)).unwrap();
            // Break the generated balance by dropping two samples.
            let samples: Vec<Vec<f64>> = x.samples().take(10).map(|s| s.to_vec()).collect();
            let x = DataMatrix::from_samples(&samples).unwrap();
            let cfg = KmeansConfig { gamma: gamma(1e6), seed: RngSeed(seed), ..Default::default() };
            let fit = fit_balanced_kmeans(&x, 3, &cfg).unwrap();
            let sizes = fit.assignment.sizes();
            assert!(sizes.max() - sizes.min() <= 1, "sizes {:?}", sizes);
            assert_eq!(
                crate::penalty::exclusive_lasso_penalty(&sizes),
                most_balanced_value(10, 3)
            );
        }
    }

    fn small_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, usize, f64, u64)> {
        (1usize..4, 1usize..4, 0usize..10).prop_flat_map(|(k, d, extra)| {
            let n = k + extra;
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
                Just(k),
                prop::sample::select(vec![0.0, 1e-2, 1.0, 1e2]),
                any::<u64>(),
            )
        })
    }

    proptest! {
        #[test]
        fn row_rule_agrees_with_full_objective((rows, k, g, seed) in small_instance()) {
            let x = DataMatrix::from_samples(&rows).unwrap();
            let a = crate::data::init_assignment(x.n(), k, InitMode::UniformRandom, RngSeed(seed)).unwrap();
            let h = update_centroids(&x, &a).unwrap();
            let g = gamma(g);
            let mut sizes = a.sizes().0;
            for i in 0..x.n() {
                sizes[a.label(i)] -= 1;
                let rule = best_cluster(x.sample(i), &h, &sizes, g.value());
                sizes[a.label(i)] += 1;
                let totals: Vec<f64> = (0..k).map(|c| {
                    let mut labels = a.labels().to_vec();
                    labels[i] = c;
                    kmeans_objective(&x, &asg(&labels, k), &h, g).unwrap().total
                }).collect();
                let min = totals.iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert!(totals[rule] <= min + 1e-9 * min.abs().max(1.0));
            }
        }

        #[test]
        fn trace_never_increases((rows, k, g, seed) in small_instance()) {
            let x = DataMatrix::from_samples(&rows).unwrap();
            let cfg = KmeansConfig { gamma: gamma(g), seed: RngSeed(seed), ..Default::default() };
            let fit = fit_balanced_kmeans(&x, k, &cfg).unwrap();
            prop_assert!(fit.trace.is_non_increasing(1e-9));
            for r in &fit.trace.records {
                prop_assert!((r.data_term + r.penalty - r.total).abs() <= 1e-12 * r.total.abs().max(1.0));
            }
        }
    }
}
