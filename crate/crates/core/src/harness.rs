//! Experiment runner: one algorithm, one dataset, a grid of penalty weights
//! and a list of seeds. Produces a [`RunReport`] with per-run results,
//! mean ± standard deviation per weight, and the sweep data behind a
//! sensitivity plot.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::ScaleMode;
use crate::data::{generate_blobs, load_csv, Assignment, DataMatrix, InitMode, RngSeed};
use crate::error::{Error, Result};
use crate::kmeans::{fit_balanced_kmeans, KmeansConfig};
use crate::metrics::{metrics_report, MetricsReport};
use crate::mincut::{fit_balanced_mincut, MincutConfig};
use crate::penalty::PenaltyWeight;
use crate::trace::ObjectiveTrace;

pub const SCHEMA_VERSION: u32 = 1;

/// Penalty weights tried by default.
pub const DEFAULT_GAMMA_GRID: [f64; 7] = [1e-6, 1e-4, 1e-2, 1e0, 1e2, 1e4, 1e6];

pub const DEFAULT_NEIGHBORS: usize = 5;

pub const DEFAULT_SEED_COUNT: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    BalancedKmeans,
    BalancedMincut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Csv {
        path: PathBuf,
        has_header: bool,
        label_column: Option<usize>,
    },
    Blobs {
        k: usize,
        per_cluster: usize,
        d: usize,
        spread: f64,
        separation: f64,
        seed: u64,
    },
}

impl Dataset {
    pub fn load(&self) -> Result<(DataMatrix, Option<Assignment>)> {
        match self {
            Dataset::Csv {
                path,
                has_header,
                label_column,
            } => load_csv(path, *has_header, *label_column),
            Dataset::Blobs {
                k,
                per_cluster,
                d,
                spread,
                separation,
                seed,
            } => {
                let (x, truth) =
                    generate_blobs(*k, *per_cluster, *d, *spread, *separation, RngSeed(*seed))?;
                Ok((x, Some(truth)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Acc,
    Nmi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub dataset: Dataset,
    pub k: usize,
    pub gammas: Vec<f64>,
    pub k_neighbors: usize,
    pub scale_mode: ScaleMode,
    pub seeds: Vec<u64>,
    pub init_mode: InitMode,
    pub repair_empty: bool,
    pub selection: Selection,
}

impl ExperimentConfig {
    /// Defaults: full γ grid, 5 neighbors, self-tuned scale, seeds 0..10.
    pub fn new(algorithm: Algorithm, dataset: Dataset, k: usize) -> Self {
        ExperimentConfig {
            algorithm,
            dataset,
            k,
            gammas: DEFAULT_GAMMA_GRID.to_vec(),
            k_neighbors: DEFAULT_NEIGHBORS,
            scale_mode: ScaleMode::SelfTuning,
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            init_mode: InitMode::UniformRandom,
            repair_empty: false,
            selection: Selection::Acc,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::InvalidArgument("gamma grid is empty".into()));
        }
        for &g in &self.gammas {
            PenaltyWeight::new(g)?;
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seed list is empty".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub metrics: MetricsReport,
    pub trace: ObjectiveTrace,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub empty_clusters: Vec<usize>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<MeanStd>,
    pub size_stddev: MeanStd,
    pub penalty_value: MeanStd,
}

impl Aggregate {
    pub fn from_runs(runs: &[SeedRun]) -> Aggregate {
        let collect = |f: &dyn Fn(&SeedRun) -> Option<f64>| -> Option<MeanStd> {
            let v: Option<Vec<f64>> = runs.iter().map(f).collect();
            v.map(|v| MeanStd::of(&v))
        };
        Aggregate {
            acc: collect(&|r| r.metrics.acc),
            nmi: collect(&|r| r.metrics.nmi),
            size_stddev: collect(&|r| Some(r.metrics.size_stddev)).expect("always present"),
            penalty_value: collect(&|r| Some(r.metrics.penalty_value)).expect("always present"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBlock {
    pub gamma: f64,
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

/// One point of the sensitivity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub acc: MeanStd,
    pub nmi: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub n: usize,
    pub d: usize,
    pub has_labels: bool,
    /// Sorted by ascending γ.
    pub blocks: Vec<GammaBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepPoint>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn runs(&self) -> impl Iterator<Item = &SeedRun> {
        self.blocks.iter().flat_map(|b| b.runs.iter())
    }

    pub fn block(&self, gamma: f64) -> Option<&GammaBlock> {
        self.blocks.iter().find(|b| b.gamma == gamma)
    }

    pub fn best_block(&self) -> Option<&GammaBlock> {
        self.best_gamma.and_then(|g| self.block(g))
    }

    /// Zeroes every wall-time field; the rest of the report is a pure
    /// function of the configuration.
    pub fn mask_wall_time(&mut self) {
        for block in &mut self.blocks {
            for run in &mut block.runs {
                run.wall_ms = 0.0;
            }
        }
    }
}

fn run_once(
    cfg: &ExperimentConfig,
    x: &DataMatrix,
    truth: Option<&Assignment>,
    gamma: f64,
    seed: u64,
) -> Result<SeedRun> {
    let weight = PenaltyWeight::new(gamma)?;
    let start = Instant::now();
    let (assignment, trace, converged, empty_clusters) = match cfg.algorithm {
        Algorithm::BalancedKmeans => {
            let kc = KmeansConfig {
                gamma: weight,
                seed: RngSeed(seed),
                init_mode: cfg.init_mode,
                ..Default::default()
            };
            let fit = fit_balanced_kmeans(x, cfg.k, &kc)?;
            let empty = (0..cfg.k).filter(|&c| fit.assignment.sizes()[c] == 0).collect();
            (fit.assignment, fit.trace, fit.converged, empty)
        }
        Algorithm::BalancedMincut => {
            let mc = MincutConfig {
                gamma: weight,
                seed: RngSeed(seed),
                init_mode: cfg.init_mode,
                scale_mode: cfg.scale_mode,
                repair_empty: cfg.repair_empty,
                ..Default::default()
            };
            let fit = fit_balanced_mincut(x, cfg.k, cfg.k_neighbors, &mc)?;
            (fit.assignment, fit.trace, fit.converged, fit.empty_clusters)
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let metrics = metrics_report(&assignment, truth)?;
    Ok(SeedRun {
        seed,
        gamma,
        iterations: trace.len(),
        converged,
        final_objective: trace.last().map_or(f64::NAN, |r| r.total),
        metrics,
        trace,
        empty_clusters,
        wall_ms,
    })
}

/// Runs every (γ, seed) pair. Runs execute in parallel; results are
/// assembled in ascending γ and then in the configured seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let (x, truth) = cfg.dataset.load()?;
    if cfg.k > x.n() {
        return Err(Error::TooFewSamples { n: x.n(), k: cfg.k });
    }

    let mut gammas = cfg.gammas.clone();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();

    let jobs: Vec<(f64, u64)> = gammas
        .iter()
        .flat_map(|&g| cfg.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let results: Vec<SeedRun> = jobs
        .par_iter()
        .map(|&(g, s)| run_once(cfg, &x, truth.as_ref(), g, s))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    for run in &results {
        if !run.empty_clusters.is_empty() {
            warnings.push(format!(
                "gamma={:e} seed={}: empty clusters {:?}",
                run.gamma, run.seed, run.empty_clusters
            ));
        }
        if !run.converged {
            warnings.push(format!(
                "gamma={:e} seed={}: iteration limit reached before convergence",
                run.gamma, run.seed
            ));
        }
    }

    let per_gamma = cfg.seeds.len();
    let blocks: Vec<GammaBlock> = results
        .chunks(per_gamma)
        .zip(&gammas)
        .map(|(runs, &gamma)| GammaBlock {
            gamma,
            aggregate: Aggregate::from_runs(runs),
            runs: runs.to_vec(),
        })
        .collect();

    let sweep: Vec<SweepPoint> = blocks
        .iter()
        .filter_map(|b| {
            Some(SweepPoint {
                gamma: b.gamma,
                acc: b.aggregate.acc?,
                nmi: b.aggregate.nmi?,
            })
        })
        .collect();
    let best_gamma = select_best(&sweep, cfg.selection);

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        n: x.n(),
        d: x.d(),
        has_labels: truth.is_some(),
        blocks,
        best_gamma,
        sweep,
        warnings,
    })
}

/// Highest mean score wins; ties go to the smaller γ.
fn select_best(sweep: &[SweepPoint], selection: Selection) -> Option<f64> {
    let score = |p: &SweepPoint| match selection {
        Selection::Acc => p.acc.mean,
        Selection::Nmi => p.nmi.mean,
    };
    let mut best: Option<&SweepPoint> = None;
    for p in sweep {
        if best.is_none_or(|b| score(p) > score(b)) {
            best = Some(p);
        }
    }
    best.map(|p| p.gamma)
}

/// Like [`run_experiment`] but requires ground truth, since the best γ is
/// chosen by mean accuracy (or NMI).
pub fn grid_search(cfg: &ExperimentConfig) -> Result<RunReport> {
    let report = run_experiment(cfg)?;
    if !report.has_labels {
        return Err(Error::NoLabels(
            "grid search selects gamma by a supervised score".into(),
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

pub fn report_json(r: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)?)
}

/// Flat rows `seed,gamma,acc,nmi,penalty,iterations,wall_ms`, one per run.
pub fn report_csv(r: &RunReport) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut out = String::from("seed,gamma,acc,nmi,penalty,iterations,wall_ms\n");
    for run in r.runs() {
        out.push_str(&format!(
            "{},{:?},{},{},{:?},{},{:?}\n",
            run.seed,
            run.gamma,
            opt(run.metrics.acc),
            opt(run.metrics.nmi),
            run.metrics.penalty_value,
            run.iterations,
            run.wall_ms
        ));
    }
    out
}

pub fn emit_report(r: &RunReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let body = match format {
        ReportFormat::Json => report_json(r)?,
        ReportFormat::Csv => report_csv(r),
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    out.write_all(body.as_bytes()).map_err(io_err)?;
    if format == ReportFormat::Json {
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
