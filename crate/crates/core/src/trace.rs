use serde::{Deserialize, Serialize};

/// Objective value after one iteration of either algorithm.
///
/// For k-means `data_term` is the squared-error fit and `total = fit + penalty`.
/// For min-cut it is the within-cluster weight `Tr(FᵀAF)`, `total = within − penalty`,
/// and `shifted_total` carries `Tr(FᵀMF)` for the shifted similarity `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub data_term: f64,
    pub penalty: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifted_total: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveTrace {
    pub records: Vec<TraceRecord>,
}

impl ObjectiveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn totals(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.total)
    }

    /// True when every step satisfies `next ≤ prev + slack·max(1, |prev|)`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].total <= w[0].total + slack * w[0].total.abs().max(1.0))
    }
}
