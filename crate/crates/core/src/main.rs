use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use balclust::affinity::ScaleMode;
use balclust::harness::{
    emit_report, report_csv, report_json, run_experiment, Algorithm, Dataset, ExperimentConfig,
    ReportFormat, Selection, DEFAULT_GAMMA_GRID, DEFAULT_NEIGHBORS, DEFAULT_SEED_COUNT,
};
use balclust::{Error, InitMode, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    #[value(alias = "kmeans", alias = "balanced_kmeans")]
    BalancedKmeans,
    #[value(alias = "mincut", alias = "balanced_mincut")]
    BalancedMincut,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Uniform,
    Balanced,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectArg {
    Acc,
    Nmi,
}

/// Balanced k-means / balanced min-cut experiment runner.
#[derive(Debug, Parser)]
#[command(name = "balclust", version)]
struct Cli {
    #[arg(long, value_enum, default_value = "balanced-kmeans")]
    algorithm: AlgorithmArg,

    /// CSV file, one sample per row.
    #[arg(long, conflicts_with = "blobs", required_unless_present = "blobs")]
    data: Option<PathBuf>,

    /// Synthetic blobs as K:per_cluster:d:spread:separation[:seed].
    #[arg(long)]
    blobs: Option<String>,

    /// The CSV has a header row.
    #[arg(long)]
    header: bool,

    /// Zero-based index of the ground-truth label column.
    #[arg(long = "labels-col")]
    labels_col: Option<usize>,

    /// Number of clusters (defaults to the blob count for --blobs).
    #[arg(long)]
    k: Option<usize>,

    /// Single penalty weight.
    #[arg(long, conflicts_with = "gamma_grid")]
    gamma: Option<f64>,

    /// Comma-separated penalty weights (default 1e-6,1e-4,...,1e6).
    #[arg(long = "gamma-grid", value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,

    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,

    /// Kernel scale: `self` or `global:<delta>`.
    #[arg(long, default_value = "self")]
    scale: String,

    /// Comma-separated seeds (default 0..10).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,

    /// Fill clusters left empty by min-cut.
    #[arg(long = "repair-empty")]
    repair_empty: bool,

    #[arg(long, value_enum, default_value = "uniform")]
    init: InitArg,

    /// Score used to pick the best gamma.
    #[arg(long, value_enum, default_value = "acc")]
    select: SelectArg,
}

fn parse_blobs(spec: &str) -> Result<Dataset> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidArgument(format!("--blobs expects K:per:d:spread:sep[:seed], got {spec:?}"));
    if !(5..=6).contains(&parts.len()) {
        return Err(bad());
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
    Ok(Dataset::Blobs {
        k: int(parts[0])?,
        per_cluster: int(parts[1])?,
        d: int(parts[2])?,
        spread: real(parts[3])?,
        separation: real(parts[4])?,
        seed: parts.get(5).map_or(Ok(0), |s| s.parse::<u64>().map_err(|_| bad()))?,
    })
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let dataset = match (&cli.data, &cli.blobs) {
        (Some(path), None) => Dataset::Csv {
            path: path.clone(),
            has_header: cli.header,
            label_column: cli.labels_col,
        },
        (None, Some(spec)) => parse_blobs(spec)?,
        _ => return Err(Error::InvalidArgument("give exactly one of --data or --blobs".into())),
    };
    let k = match (cli.k, &dataset) {
        (Some(k), _) => k,
        (None, Dataset::Blobs { k, .. }) => *k,
        (None, Dataset::Csv { .. }) => {
            return Err(Error::InvalidArgument("--k is required with --data".into()))
        }
    };
    let algorithm = match cli.algorithm {
        AlgorithmArg::BalancedKmeans => Algorithm::BalancedKmeans,
        AlgorithmArg::BalancedMincut => Algorithm::BalancedMincut,
    };
    let mut cfg = ExperimentConfig::new(algorithm, dataset, k);
    cfg.gammas = match (cli.gamma, &cli.gamma_grid) {
        (Some(g), _) => vec![g],
        (None, Some(grid)) => grid.clone(),
        (None, None) => DEFAULT_GAMMA_GRID.to_vec(),
    };
    cfg.k_neighbors = cli.neighbors;
    cfg.scale_mode = cli.scale.parse::<ScaleMode>()?;
    cfg.seeds = cli
        .seeds
        .clone()
        .unwrap_or_else(|| (0..DEFAULT_SEED_COUNT).collect());
    cfg.init_mode = match cli.init {
        InitArg::Uniform => InitMode::UniformRandom,
        InitArg::Balanced => InitMode::BalancedRandom,
    };
    cfg.repair_empty = cli.repair_empty;
    cfg.selection = match cli.select {
        SelectArg::Acc => Selection::Acc,
        SelectArg::Nmi => Selection::Nmi,
    };
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let report = run_experiment(&cfg)?;
    let format = match cli.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &cli.out {
        Some(path) => emit_report(&report, path, format),
        None => {
            match format {
                ReportFormat::Json => println!("{}", report_json(&report)?),
                ReportFormat::Csv => print!("{}", report_csv(&report)),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
