//! External clustering metrics and balance statistics.
//!
//! - Accuracy: fraction of samples matched under the best one-to-one mapping
//!   of predicted clusters onto classes, solved with the Hungarian algorithm
//!   on the contingency table.
//! - NMI: `I(P; Q) / √(H(P)·H(Q))` with natural logarithms.

use serde::{Deserialize, Serialize};

use crate::data::{Assignment, ClusterSizes};
use crate::error::{Error, Result};
use crate::hungarian::max_weight_assignment;
use crate::penalty::exclusive_lasso_penalty;

/// `counts[l][h]` = samples with predicted label `l` and true label `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

pub fn contingency_table(pred: &Assignment, truth: &Assignment) -> Result<ContingencyTable> {
    if pred.n() != truth.n() {
        return Err(Error::Shape(format!(
            "prediction has {} labels, truth has {}",
            pred.n(),
            truth.n()
        )));
    }
    let mut counts = vec![vec![0u64; truth.k()]; pred.k()];
    for (&l, &h) in pred.labels().iter().zip(truth.labels()) {
        counts[l][h] += 1;
    }
    let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..truth.k())
        .map(|h| counts.iter().map(|r| r[h]).sum())
        .collect();
    Ok(ContingencyTable {
        counts,
        row_sums,
        col_sums,
        n: pred.n() as u64,
    })
}

pub fn accuracy(pred: &Assignment, truth: &Assignment) -> Result<f64> {
    let table = contingency_table(pred, truth)?;
    if table.n == 0 {
        return Ok(1.0);
    }
    let size = table.counts.len().max(table.col_sums.len());
    let mut weight = vec![vec![0i64; size]; size];
    for (l, row) in table.counts.iter().enumerate() {
        for (h, &c) in row.iter().enumerate() {
            weight[l][h] = c as i64;
        }
    }
    let mapping = max_weight_assignment(&weight);
    let matched: i64 = mapping.iter().enumerate().map(|(l, &h)| weight[l][h]).sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&t| t > 0)
        .map(|&t| {
            let p = t as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// True when every non-empty row and column of the table has exactly one
/// non-zero cell, i.e. the partitions agree up to relabeling.
fn is_relabeling(table: &ContingencyTable) -> bool {
    let rows_ok = table
        .counts
        .iter()
        .all(|r| r.iter().filter(|&&c| c > 0).count() <= 1);
    let cols_ok = (0..table.col_sums.len())
        .all(|h| table.counts.iter().filter(|r| r[h] > 0).count() <= 1);
    rows_ok && cols_ok
}

pub fn nmi(pred: &Assignment, truth: &Assignment) -> Result<f64> {
    let table = contingency_table(pred, truth)?;
    if table.n == 0 {
        return Err(Error::Empty);
    }
    let n = table.n as f64;
    let (hp, hq) = (entropy(&table.row_sums, n), entropy(&table.col_sums, n));
    if hp == 0.0 || hq == 0.0 {
        return Ok(if hp == 0.0 && hq == 0.0 { 1.0 } else { 0.0 });
    }
    if is_relabeling(&table) {
        return Ok(1.0);
    }
    let mut mutual = 0.0;
    for (l, row) in table.counts.iter().enumerate() {
        for (h, &t) in row.iter().enumerate() {
            if t == 0 {
                continue;
            }
            let joint = (table.n * t) as f64;
            let product = (table.row_sums[l] * table.col_sums[h]) as f64;
            mutual += t as f64 / n * (joint / product).ln();
        }
    }
    Ok((mutual / (hp * hq).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub penalty_value: f64,
    pub size_stddev: f64,
    pub is_perfectly_balanced: bool,
}

/// Square-sum of sizes, population standard deviation of sizes, and whether
/// the largest and smallest cluster differ by at most one.
pub fn balance_report(a: &Assignment) -> BalanceReport {
    balance_of_sizes(&a.sizes())
}

pub fn balance_of_sizes(sizes: &ClusterSizes) -> BalanceReport {
    let k = sizes.k() as f64;
    let mean = sizes.total() as f64 / k;
    let var = sizes
        .as_slice()
        .iter()
        .map(|&s| (s as f64 - mean).powi(2))
        .sum::<f64>()
        / k;
    BalanceReport {
        penalty_value: exclusive_lasso_penalty(sizes) as f64,
        size_stddev: var.sqrt(),
        is_perfectly_balanced: sizes.max() - sizes.min() <= 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    pub cluster_sizes: ClusterSizes,
    pub penalty_value: f64,
    pub size_stddev: f64,
    pub is_perfectly_balanced: bool,
}

pub fn metrics_report(pred: &Assignment, truth: Option<&Assignment>) -> Result<MetricsReport> {
    let (acc, nmi) = match truth {
        Some(t) => (Some(accuracy(pred, t)?), Some(nmi(pred, t)?)),
        None => (None, None),
    };
    let balance = balance_report(pred);
    Ok(MetricsReport {
        acc,
        nmi,
        cluster_sizes: pred.sizes(),
        penalty_value: balance.penalty_value,
        size_stddev: balance.size_stddev,
        is_perfectly_balanced: balance.is_perfectly_balanced,
    })
}
