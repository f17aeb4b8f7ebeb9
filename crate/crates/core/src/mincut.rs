//! Balanced min-cut.
//!
//! Maximizes `Tr(FᵀAF) − γ·Tr(Fᵀ𝟙𝟙ᵀF)` over indicator matrices `F`, i.e. the
//! within-cluster affinity minus the balance penalty. Adding the constant
//! `ρ·Tr(FᵀF) = ρn` turns this into `Tr(FᵀMF)` with `M = ρI + A − γ𝟙𝟙ᵀ`.
//! Each iteration computes the scores `B = MF` and takes the row-wise argmax,
//! which maximizes `Tr(F̂ᵀB)`. When `M` is positive semi-definite the
//! linearization bound `Tr(F̂ᵀMF̂) ≥ 2Tr(F̂ᵀMF) − Tr(FᵀMF) ≥ Tr(FᵀMF)` makes
//! every step an ascent step.
//!
//! # Choice of shift
//!
//! `B = MF` gives every row a bonus of `ρ` on its current label, so a row
//! moves only if another cluster beats its current one by more than `ρ` on the
//! unshifted scores. The certified shift from [`select_rho`] exceeds every such
//! advantage, which pins the assignment to its starting point. The default
//! [`ShiftPolicy::Adaptive`] therefore picks the shift per iteration from a
//! ladder of thresholds between the rows' advantages, smallest first, and
//! keeps the first step whose exact objective strictly increases. The last
//! rung moves a single best row, whose exact gain is `2(advantage − γ)`, so
//! the loop stops only at a state where no single relabeling helps.
//! [`ShiftPolicy::Certified`] runs the fixed certified shift instead.

use serde::{Deserialize, Serialize};

use crate::affinity::{build_affinity_with, AffinityMatrix, ScaleMode, Symmetrization};
use crate::data::{init_assignment, Assignment, DataMatrix, InitMode, RngSeed};
use crate::error::{Error, Result};
use crate::penalty::{exclusive_lasso_penalty, PenaltyWeight};
use crate::trace::{ObjectiveTrace, TraceRecord};

/// `M = ρI + A − γ𝟙𝟙ᵀ`, never materialized.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedSimilarity<'a> {
    pub rho: f64,
    pub gamma: PenaltyWeight,
    pub affinity: &'a AffinityMatrix,
}

impl ShiftedSimilarity<'_> {
    /// `Tr(FᵀMF) = ρn + Tr(FᵀAF) − γΣ_k n_k²`.
    pub fn trace_value(&self, a: &Assignment) -> Result<f64> {
        let obj = mincut_objective(self.affinity, a, self.gamma)?;
        Ok(self.rho * a.n() as f64 + obj.total)
    }
}

/// Row-major `n × K` scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    scores: Vec<f64>,
    n: usize,
    k: usize,
}

impl ScoreMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("score rows must be non-empty and equally long".into()));
        }
        Ok(ScoreMatrix {
            scores: rows.concat(),
            n,
            k,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.scores[i * self.k + k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPolicy {
    #[default]
    Adaptive,
    Certified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MincutConfig {
    pub gamma: PenaltyWeight,
    pub max_iters: usize,
    pub seed: RngSeed,
    pub init_mode: InitMode,
    pub rho_margin: f64,
    pub scale_mode: ScaleMode,
    pub symmetrization: Symmetrization,
    pub shift_policy: ShiftPolicy,
    /// Move the weakest-margin point into each empty cluster after convergence.
    pub repair_empty: bool,
}

impl Default for MincutConfig {
    fn default() -> Self {
        MincutConfig {
            gamma: PenaltyWeight::ZERO,
            max_iters: 300,
            seed: RngSeed(0),
            init_mode: InitMode::UniformRandom,
            rho_margin: 1.0,
            scale_mode: ScaleMode::SelfTuning,
            symmetrization: Symmetrization::Either,
            shift_policy: ShiftPolicy::Adaptive,
            repair_empty: false,
        }
    }
}

impl MincutConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.rho_margin > 0.0 && self.rho_margin.is_finite()) {
            return Err(Error::InvalidArgument("rho_margin must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MincutObjective {
    pub within: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct MincutFit {
    pub assignment: Assignment,
    /// Iteration 0 is the starting assignment.
    pub trace: ObjectiveTrace,
    /// Certified shift used for `shifted_total` in the trace.
    pub rho: f64,
    pub converged: bool,
    /// Clusters left empty by the iteration (before any repair).
    pub empty_clusters: Vec<usize>,
    pub repaired: bool,
}

/// `ρ = max_i Σ_j A_ij + γn + margin`.
///
/// Row `i` of `M` has diagonal `ρ + A_ii − γ` and off-diagonal absolute sum at
/// most `Σ_{j≠i} A_ij + γ(n − 1)`, so every Gershgorin disc lies to the right
/// of `margin` and `M` is positive definite.
pub fn select_rho(a: &AffinityMatrix, gamma: PenaltyWeight, margin: f64) -> f64 {
    a.max_degree() + gamma.value() * a.n() as f64 + margin
}

fn check_shape(a: &AffinityMatrix, assignment: &Assignment) -> Result<()> {
    if a.n() != assignment.n() {
        return Err(Error::Shape(format!(
            "assignment has {} labels for a {}-node graph",
            assignment.n(),
            a.n()
        )));
    }
    Ok(())
}

/// `B[i][k] = ρ·[label(i) = k] + (A q_k)_i − γ n_k`.
pub fn compute_scores(
    a: &AffinityMatrix,
    assignment: &Assignment,
    rho: f64,
    gamma: PenaltyWeight,
) -> Result<ScoreMatrix> {
    check_shape(a, assignment)?;
    let (n, k) = (a.n(), assignment.k());
    let labels = assignment.labels();
    let sizes = assignment.sizes();
    let mut scores = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut scores[i * k..(i + 1) * k];
        for (j, &w) in a.row(i).iter().enumerate() {
            row[labels[j]] += w;
        }
        for (c, s) in row.iter_mut().enumerate() {
            *s -= gamma.value() * sizes[c] as f64;
        }
        row[labels[i]] += rho;
    }
    Ok(ScoreMatrix { scores, n, k })
}

/// Row-wise argmax, lowest cluster index on ties.
pub fn argmax_assign(b: &ScoreMatrix) -> Assignment {
    let labels = (0..b.n())
        .map(|i| {
            let row = b.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Assignment::new(labels, b.k()).expect("argmax labels are in range")
}

/// `within = Tr(FᵀAF)`, `penalty = γΣ_k n_k²`, `total = within − penalty`.
pub fn mincut_objective(
    a: &AffinityMatrix,
    assignment: &Assignment,
    gamma: PenaltyWeight,
) -> Result<MincutObjective> {
    check_shape(a, assignment)?;
    let labels = assignment.labels();
    let within: f64 = (0..a.n())
        .map(|i| {
            a.row(i)
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == labels[i])
                .map(|(w, _)| w)
                .sum::<f64>()
        })
        .sum();
    let penalty = gamma.value() * exclusive_lasso_penalty(&assignment.sizes()) as f64;
    Ok(MincutObjective {
        within,
        penalty,
        total: within - penalty,
    })
}

/// Builds the kNN affinity of `x` and runs balanced min-cut from a seeded start.
pub fn fit_balanced_mincut(
    x: &DataMatrix,
    k: usize,
    k_neighbors: usize,
    cfg: &MincutConfig,
) -> Result<MincutFit> {
    cfg.validate()?;
    if k == 0 || x.n() < k {
        return Err(Error::TooFewSamples { n: x.n(), k });
    }
    let a = build_affinity_with(x, k_neighbors, cfg.scale_mode, cfg.symmetrization)?;
    let init = init_assignment(x.n(), k, cfg.init_mode, cfg.seed)?;
    fit_balanced_mincut_on(&a, init, cfg)
}

/// Runs balanced min-cut on a given graph from a given assignment.
/// `cfg.seed`, `cfg.init_mode` and the graph settings are ignored.
pub fn fit_balanced_mincut_on(
    a: &AffinityMatrix,
    init: Assignment,
    cfg: &MincutConfig,
) -> Result<MincutFit> {
    cfg.validate()?;
    check_shape(a, &init)?;
    let gamma = cfg.gamma;
    let rho = select_rho(a, gamma, cfg.rho_margin);
    let n = a.n() as f64;

    let record = |iteration: usize, obj: MincutObjective| TraceRecord {
        iteration,
        data_term: obj.within,
        penalty: obj.penalty,
        total: obj.total,
        shifted_total: Some(rho * n + obj.total),
    };

    let mut current = init;
    let mut obj = mincut_objective(a, &current, gamma)?;
    let mut trace = ObjectiveTrace::default();
    trace.records.push(record(0, obj));
    let mut converged = false;

    for iteration in 1..=cfg.max_iters {
        let step = match cfg.shift_policy {
            ShiftPolicy::Certified => {
                let next = argmax_assign(&compute_scores(a, &current, rho, gamma)?);
                let next_obj = mincut_objective(a, &next, gamma)?;
                Some((next, next_obj))
            }
            ShiftPolicy::Adaptive => adaptive_step(a, &current, gamma, obj.total)?,
        };
        match step {
            Some((next, next_obj)) if next != current && improves(next_obj.total, obj.total) => {
                current = next;
                obj = next_obj;
                trace.records.push(record(iteration, obj));
            }
            _ => {
                converged = true;
                break;
            }
        }
    }

    let sizes = current.sizes();
    let empty_clusters: Vec<usize> = (0..sizes.k()).filter(|&c| sizes[c] == 0).collect();
    let repaired = cfg.repair_empty && !empty_clusters.is_empty();
    if repaired {
        current = repair_empty_clusters(a, current, gamma)?;
    }

    Ok(MincutFit {
        assignment: current,
        trace,
        rho,
        converged,
        empty_clusters,
        repaired,
    })
}

fn improves(next: f64, prev: f64) -> bool {
    next - prev > 1e-12 * prev.abs().max(1.0)
}

/// Tries shifts from small to large; returns the first strictly improving
/// step, or `None` when no rung improves.
fn adaptive_step(
    a: &AffinityMatrix,
    current: &Assignment,
    gamma: PenaltyWeight,
    current_total: f64,
) -> Result<Option<(Assignment, MincutObjective)>> {
    let base = compute_scores(a, current, 0.0, gamma)?;
    let advantages: Vec<f64> = (0..base.n())
        .map(|i| {
            let row = base.row(i);
            row.iter().copied().fold(f64::NEG_INFINITY, f64::max) - row[current.label(i)]
        })
        .collect();
    let mut levels: Vec<f64> = advantages.iter().copied().filter(|&g| g > 0.0).collect();
    if levels.is_empty() {
        return Ok(None);
    }
    levels.sort_by(|x, y| y.total_cmp(x));
    levels.dedup();

    // Shift `(levels[j-1] + levels[j]) / 2` moves exactly the rows whose
    // advantage is among the top `j` distinct levels.
    let mut j = levels.len();
    loop {
        let below = levels.get(j).copied().unwrap_or(0.0);
        let rho = 0.5 * (levels[j - 1] + below);
        let next = argmax_assign(&compute_scores(a, current, rho, gamma)?);
        let next_obj = mincut_objective(a, &next, gamma)?;
        if improves(next_obj.total, current_total) {
            return Ok(Some((next, next_obj)));
        }
        if j == 1 {
            break;
        }
        j = j.div_ceil(2);
    }

    // Several rows tie at the top level: move the first of them alone.
    let top = levels[0];
    if advantages.iter().filter(|&&g| g == top).count() > 1 {
        let i = advantages.iter().position(|&g| g == top).expect("top level exists");
        let row = base.row(i);
        let target = (0..row.len())
            .filter(|&c| c != current.label(i))
            .fold(None::<usize>, |best, c| match best {
                Some(b) if row[b] >= row[c] => Some(b),
                _ => Some(c),
            })
            .expect("K ≥ 2 when a row has positive advantage");
        let mut next = current.clone();
        next.set(i, target);
        let next_obj = mincut_objective(a, &next, gamma)?;
        if improves(next_obj.total, current_total) {
            return Ok(Some((next, next_obj)));
        }
    }
    Ok(None)
}

/// For each empty cluster, moves in the point whose current score lead over
/// that cluster is smallest, taken from a cluster with at least two members.
pub fn repair_empty_clusters(
    a: &AffinityMatrix,
    mut assignment: Assignment,
    gamma: PenaltyWeight,
) -> Result<Assignment> {
    for c in 0..assignment.k() {
        let sizes = assignment.sizes();
        if sizes[c] > 0 {
            continue;
        }
        let scores = compute_scores(a, &assignment, 0.0, gamma)?;
        let pick = (0..assignment.n())
            .filter(|&i| sizes[assignment.label(i)] >= 2)
            .map(|i| (scores.get(i, assignment.label(i)) - scores.get(i, c), i))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if let Some((_, i)) = pick {
            assignment.set(i, c);
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair() -> AffinityMatrix {
        AffinityMatrix::from_dense(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    fn asg(labels: &[usize], k: usize) -> Assignment {
        Assignment::new(labels.to_vec(), k).unwrap()
    }

    fn gamma(g: f64) -> PenaltyWeight {
        PenaltyWeight::new(g).unwrap()
    }

    #[test]
    fn rho_examples() {
        let zero = AffinityMatrix::from_dense(2, vec![0.0; 4]).unwrap();
        assert_eq!(select_rho(&zero, gamma(1.0), 1.0), 3.0);
        assert_eq!(select_rho(&zero, gamma(0.0), 1.0), 1.0);
        assert_eq!(select_rho(&pair(), gamma(0.5), 1.0), 1.0 + 1.0 + 1.0);
    }

    #[test]
    fn score_examples() {
        let zero = AffinityMatrix::from_dense(2, vec![0.0; 4]).unwrap();
        let b = compute_scores(&zero, &asg(&[0, 1], 2), 1.0, gamma(0.0)).unwrap();
        assert_eq!((b.row(0), b.row(1)), (&[1.0, 0.0][..], &[0.0, 1.0][..]));

        let b = compute_scores(&pair(), &asg(&[0, 0], 2), 0.0, gamma(0.0)).unwrap();
        assert_eq!((b.row(0), b.row(1)), (&[1.0, 0.0][..], &[1.0, 0.0][..]));

        let b = compute_scores(&pair(), &asg(&[0, 1], 2), 2.0, gamma(1.0)).unwrap();
        assert_eq!((b.row(0), b.row(1)), (&[1.0, 0.0][..], &[0.0, 1.0][..]));

        assert!(compute_scores(&pair(), &asg(&[0, 1, 1], 2), 1.0, gamma(0.0)).is_err());
    }

    #[test]
    fn argmax_examples() {
        let b = ScoreMatrix::from_rows(&[vec![0.2, 0.9], vec![0.5, 0.1]]).unwrap();
        assert_eq!(argmax_assign(&b).labels(), &[1, 0]);
        let b = ScoreMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(argmax_assign(&b).labels(), &[0]);
        let a = asg(&[2, 0, 1], 3);
        let one_hot: Vec<Vec<f64>> = a
            .one_hot()
            .into_iter()
            .map(|r| r.into_iter().map(f64::from).collect())
            .collect();
        assert_eq!(argmax_assign(&ScoreMatrix::from_rows(&one_hot).unwrap()), a);
    }

    #[test]
    fn objective_examples() {
        let o = mincut_objective(&pair(), &asg(&[0, 0], 2), gamma(0.0)).unwrap();
        assert_eq!((o.within, o.total), (2.0, 2.0));
        let o = mincut_objective(&pair(), &asg(&[0, 1], 2), gamma(0.0)).unwrap();
        assert_eq!((o.within, o.total), (0.0, 0.0));
        assert_eq!(mincut_objective(&pair(), &asg(&[0, 0], 2), gamma(1.0)).unwrap().total, -2.0);
        assert_eq!(mincut_objective(&pair(), &asg(&[0, 1], 2), gamma(1.0)).unwrap().total, -2.0);
    }

    #[test]
    fn objective_matches_cut_value_within() {
        let (x, _) = generate_blobs(3, 5, 2, 1.0, 3.0, RngSeed(1)).unwrap();
        let a = crate::affinity::build_affinity(&x, 4, ScaleMode::SelfTuning).unwrap();
        let labels = init_assignment(x.n(), 3, InitMode::UniformRandom, RngSeed(2)).unwrap();
        let (within, _) = crate::affinity::cut_value(&a, &labels).unwrap();
        let o = mincut_objective(&a, &labels, PenaltyWeight::ZERO).unwrap();
        assert!((o.total - within).abs() <= 1e-12 * within.max(1.0));
    }

    #[test]
    fn certified_shift_pins_the_start() {
        let (x, _) = generate_blobs(2, 10, 2, 0.1, 10.0, RngSeed(3)).unwrap();
        let cfg = MincutConfig {
            shift_policy: ShiftPolicy::Certified,
            gamma: gamma(0.1),
            ..Default::default()
        };
        let a = crate::affinity::build_affinity(&x, 5, ScaleMode::SelfTuning).unwrap();
        let init = init_assignment(x.n(), 2, InitMode::UniformRandom, RngSeed(0)).unwrap();
        let fit = fit_balanced_mincut_on(&a, init.clone(), &cfg).unwrap();
        assert_eq!(fit.assignment, init);
        assert_eq!(fit.trace.len(), 1);
    }

    #[test]
    fn pair_splits_under_large_gamma() {
        for init in [asg(&[0, 0], 2), asg(&[1, 1], 2), asg(&[0, 1], 2)] {
            let cfg = MincutConfig { gamma: gamma(10.0), ..Default::default() };
            let fit = fit_balanced_mincut_on(&pair(), init, &cfg).unwrap();
            assert_eq!(fit.assignment.sizes().as_slice(), &[1, 1]);
        }
    }

    #[test]
    fn separated_cliques_recovered() {
        // With 6 points per blob and 5 neighbors every blob is a clique with
        // no cross edges; the penalty rules out merging the blobs.
        let (x, truth) = generate_blobs(2, 6, 2, 0.1, 50.0, RngSeed(4)).unwrap();
        for seed in 0..10 {
            let cfg = MincutConfig { gamma: gamma(1.0), seed: RngSeed(seed), ..Default::default() };
            let fit = fit_balanced_mincut(&x, 2, 5, &cfg).unwrap();
            assert_eq!(crate::metrics::accuracy(&fit.assignment, &truth).unwrap(), 1.0);
        }
    }

    #[test]
    fn converged_state_has_no_improving_single_move() {
        let (x, _) = generate_blobs(3, 15, 2, 1.0, 2.0, RngSeed(5)).unwrap();
        let a = crate::affinity::build_affinity(&x, 5, ScaleMode::SelfTuning).unwrap();
        for g in [0.0, 1e-2, 1.0] {
            let init = init_assignment(x.n(), 3, InitMode::UniformRandom, RngSeed(2)).unwrap();
            let fit = fit_balanced_mincut_on(&a, init, &MincutConfig { gamma: gamma(g), ..Default::default() }).unwrap();
            assert!(fit.converged);
            let base = mincut_objective(&a, &fit.assignment, gamma(g)).unwrap().total;
            for i in 0..x.n() {
                for c in 0..3 {
                    let mut moved = fit.assignment.clone();
                    moved.set(i, c);
                    let v = mincut_objective(&a, &moved, gamma(g)).unwrap().total;
                    assert!(v <= base + 1e-12 * base.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (x, _) = generate_blobs(3, 10, 3, 1.0, 3.0, RngSeed(6)).unwrap();
        let cfg = MincutConfig { gamma: gamma(0.01), seed: RngSeed(17), ..Default::default() };
        let a = fit_balanced_mincut(&x, 3, 5, &cfg).unwrap();
        let b = fit_balanced_mincut(&x, 3, 5, &cfg).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn repair_fills_empty_clusters() {
        let a = AffinityMatrix::from_dense(3, vec![0.0, 1.0, 0.2, 1.0, 0.0, 0.5, 0.2, 0.5, 0.0]).unwrap();
        let fixed = repair_empty_clusters(&a, asg(&[0, 0, 0], 2), PenaltyWeight::ZERO).unwrap();
        // Sample 2 has the weakest pull toward cluster 0.
        assert_eq!(fixed.labels(), &[0, 0, 1]);
    }

    fn random_graph(n: usize, seed: u64) -> AffinityMatrix {
        let mut rng = RngSeed(seed).rng();
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 };
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        AffinityMatrix::from_dense(n, w).unwrap()
    }

    proptest! {
        #[test]
        fn shift_adds_to_current_label_only(n in 2usize..12, k in 1usize..4, seed: u64, r1 in 0.0f64..5.0, r2 in 0.0f64..5.0) {
            let a = random_graph(n, seed);
            let labels = init_assignment(n.max(k), k, InitMode::UniformRandom, RngSeed(seed)).unwrap();
            prop_assume!(labels.n() == n);
            let g = gamma(0.3);
            let b1 = compute_scores(&a, &labels, r1, g).unwrap();
            let b2 = compute_scores(&a, &labels, r2, g).unwrap();
            for i in 0..n {
                for c in 0..k {
                    let expected = if c == labels.label(i) { r2 - r1 } else { 0.0 };
                    prop_assert!((b2.get(i, c) - b1.get(i, c) - expected).abs() <= 1e-12 * (1.0 + r1 + r2 + n as f64));
                }
            }
        }

        #[test]
        fn shifted_trace_never_decreases(n in 3usize..30, k in 1usize..4, seed: u64, g in prop::sample::select(vec![0.0, 1e-2, 1.0, 1e2])) {
            prop_assume!(n >= k);
            let a = random_graph(n, seed);
            let init = init_assignment(n, k, InitMode::UniformRandom, RngSeed(seed ^ 1)).unwrap();
            let fit = fit_balanced_mincut_on(&a, init, &MincutConfig { gamma: gamma(g), ..Default::default() }).unwrap();
            for w in fit.trace.records.windows(2) {
                let (p, q) = (w[0].shifted_total.unwrap(), w[1].shifted_total.unwrap());
                prop_assert!(q >= p - 1e-9 * p.abs().max(1.0));
            }
        }
    }
}
