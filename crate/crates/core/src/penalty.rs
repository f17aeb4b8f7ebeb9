//! Exclusive-lasso balance penalty restricted to indicator matrices.
//!
//! For a one-hot `F` the penalty `Tr(Fᵀ𝟙𝟙ᵀF)` is the square-sum of the
//! cluster sizes, `Σ_k n_k²`. It is minimized by the most even split, so
//! adding `γ·Σ_k n_k²` to a clustering objective pushes toward balance.
//! Everything here works on integer sizes; `𝟙𝟙ᵀ` is never formed.

use serde::{Deserialize, Serialize};

use crate::data::ClusterSizes;
use crate::error::{Error, Result};

/// Weight `γ ≥ 0` of the balance penalty. Zero gives the classical algorithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PenaltyWeight(f64);

impl PenaltyWeight {
    pub const ZERO: PenaltyWeight = PenaltyWeight(0.0);

    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma >= 0.0 {
            Ok(PenaltyWeight(gamma))
        } else {
            Err(Error::InvalidArgument(format!(
                "penalty weight must be finite and non-negative, got {gamma}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `Σ_k n_k²`.
pub fn exclusive_lasso_penalty(sizes: &ClusterSizes) -> u64 {
    sizes.as_slice().iter().map(|&s| (s as u64) * (s as u64)).sum()
}

/// Change in `Σ_k n_k²` when one point moves from `from` to `to`:
/// `2(n_to − n_from) + 2`, or 0 for `from == to`.
pub fn penalty_delta(sizes: &ClusterSizes, from: usize, to: usize) -> Result<i64> {
    let k = sizes.k();
    if from >= k || to >= k {
        return Err(Error::InvalidArgument(format!(
            "cluster index out of range for K = {k}"
        )));
    }
    if sizes[from] == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot move a point out of empty cluster {from}"
        )));
    }
    if from == to {
        return Ok(0);
    }
    Ok(2 * (sizes[to] as i64 - sizes[from] as i64) + 2)
}

/// Smallest `Σ parts²` over compositions of `n` into `k` non-negative parts:
/// `r` parts of `⌈n/k⌉` and `k − r` parts of `⌊n/k⌋`, with `r = n mod k`.
pub fn most_balanced_value(n: usize, k: usize) -> u64 {
    assert!(k >= 1, "cluster count must be at least 1");
    let (q, r) = ((n / k) as u64, (n % k) as u64);
    let k = k as u64;
    r * (q + 1) * (q + 1) + (k - r) * q * q
}
