//! Exhaustive reference solvers for tiny instances.
//!
//! Nothing here calls into the algorithm or metric modules: objectives are
//! re-derived from their definitions so the oracles stay an independent check.

use crate::affinity::AffinityMatrix;
use crate::data::{Assignment, DataMatrix};
use crate::error::{Error, Result};
use crate::penalty::PenaltyWeight;

/// Upper bound on the number of states an exhaustive search may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_states: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_states: 1_000_000,
        }
    }
}

fn check_budget(n: usize, k: usize, budget: EnumerationBudget) -> Result<()> {
    let states = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if k == 0 || states > budget.max_states as u128 {
        return Err(Error::BudgetExceeded {
            states,
            budget: budget.max_states,
        });
    }
    Ok(())
}

/// Visits every labeling of `n` items with `k` labels in lexicographic order.
fn for_each_labeling(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut labels = vec![0usize; n];
    loop {
        visit(&labels);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
    }
}

/// Sum of squared deviations from cluster means plus `γ·Σ n_k²`.
fn kmeans_value(x: &DataMatrix, labels: &[usize], k: usize, gamma: f64) -> f64 {
    let d = x.d();
    let mut sum = vec![vec![0.0; d]; k];
    let mut count = vec![0usize; k];
    for (j, &l) in labels.iter().enumerate() {
        count[l] += 1;
        for f in 0..d {
            sum[l][f] += x.get(f, j);
        }
    }
    let mut sse = 0.0;
    for (j, &l) in labels.iter().enumerate() {
        for f in 0..d {
            let diff = x.get(f, j) - sum[l][f] / count[l] as f64;
            sse += diff * diff;
        }
    }
    let square_sum: usize = count.iter().map(|c| c * c).sum();
    sse + gamma * square_sum as f64
}

/// Global minimizer of the balanced k-means objective by enumeration.
/// Exact ties resolve to the lexicographically smallest labeling.
pub fn exhaustive_kmeans_optimum(
    x: &DataMatrix,
    k: usize,
    gamma: PenaltyWeight,
    budget: EnumerationBudget,
) -> Result<(Assignment, f64)> {
    check_budget(x.n(), k, budget)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_labeling(x.n(), k, |labels| {
        let v = kmeans_value(x, labels, k, gamma.value());
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((labels.to_vec(), v));
        }
    });
    let (labels, value) = best.expect("at least one labeling");
    Ok((Assignment::new(labels, k)?, value))
}

/// Global maximizer of `Σ_{l_i = l_j} A_ij − γ·Σ n_k²` by enumeration.
pub fn exhaustive_mincut_optimum(
    a: &AffinityMatrix,
    k: usize,
    gamma: PenaltyWeight,
    budget: EnumerationBudget,
) -> Result<(Assignment, f64)> {
    let n = a.n();
    check_budget(n, k, budget)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_labeling(n, k, |labels| {
        let mut within = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    within += a.get(i, j);
                }
            }
        }
        let mut count = vec![0usize; k];
        labels.iter().for_each(|&l| count[l] += 1);
        let square_sum: usize = count.iter().map(|c| c * c).sum();
        let v = within - gamma.value() * square_sum as f64;
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((labels.to_vec(), v));
        }
    });
    let (labels, value) = best.expect("at least one labeling");
    Ok((Assignment::new(labels, k)?, value))
}

/// Best matched fraction over all injective maps from predicted labels to
/// true labels (a predicted label may also stay unmapped).
pub fn brute_force_accuracy(pred: &Assignment, truth: &Assignment) -> Result<f64> {
    if pred.n() != truth.n() {
        return Err(Error::Shape("label sequences differ in length".into()));
    }
    let distinct = |labels: &[usize]| {
        let mut v = labels.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (p_labels, t_labels) = (distinct(pred.labels()), distinct(truth.labels()));
    if p_labels.len() > 6 || t_labels.len() > 6 {
        return Err(Error::InvalidArgument(
            "brute-force accuracy supports at most 6 distinct labels per side".into(),
        ));
    }
    if pred.n() == 0 {
        return Ok(1.0);
    }
    let mut overlap = vec![vec![0usize; t_labels.len()]; p_labels.len()];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        let pi = p_labels.binary_search(&p).expect("present");
        let ti = t_labels.binary_search(&t).expect("present");
        overlap[pi][ti] += 1;
    }

    fn best_from(row: usize, overlap: &[Vec<usize>], used: &mut [bool]) -> usize {
        if row == overlap.len() {
            return 0;
        }
        let mut best = best_from(row + 1, overlap, used);
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                best = best.max(overlap[row][t] + best_from(row + 1, overlap, used));
                used[t] = false;
            }
        }
        best
    }

    let matched = best_from(0, &overlap, &mut vec![false; t_labels.len()]);
    Ok(matched as f64 / pred.n() as f64)
}

/// Smallest `Σ parts²` over every composition of `n` into `k` non-negative
/// parts, found by enumeration.
pub fn enumerated_min_square_sum(n: usize, k: usize) -> u64 {
    fn rec(remaining: usize, parts_left: usize) -> u64 {
        if parts_left == 1 {
            return (remaining * remaining) as u64;
        }
        (0..=remaining)
            .map(|first| (first * first) as u64 + rec(remaining - first, parts_left - 1))
            .min()
            .expect("non-empty range")
    }
    assert!(k >= 1);
    rec(n, k)
}
