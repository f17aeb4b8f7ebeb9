//! Balanced clustering with an exclusive-lasso size penalty.
//!
//! Two algorithms share one regularizer, `γ·Σ_k n_k²`, which is smallest when
//! clusters are equally sized:
//!
//! - [`kmeans`]: balanced k-means, alternating centroid means with row-wise
//!   label updates.
//! - [`mincut`]: balanced min-cut on a kNN Gaussian affinity graph, by
//!   iterated score/argmax updates of the indicator matrix.
//!
//! With `γ = 0` both reduce to their classical forms. [`metrics`] provides
//! Hungarian-matched accuracy and NMI, [`oracle`] exhaustive reference
//! solvers for tiny instances, and [`harness`] the experiment runner behind
//! the `balclust` binary.

pub mod affinity;
pub mod data;
pub mod error;
pub mod harness;
pub mod hungarian;
pub mod kmeans;
pub mod metrics;
pub mod mincut;
pub mod oracle;
pub mod penalty;
pub mod trace;

pub use data::{
    cluster_sizes, generate_blobs, init_assignment, load_csv, write_csv, Assignment, ClusterSizes,
    DataMatrix, InitMode, RngSeed,
};
pub use error::{Error, Result};
pub use penalty::PenaltyWeight;
pub use trace::{ObjectiveTrace, TraceRecord};
