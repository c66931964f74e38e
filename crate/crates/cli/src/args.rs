use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fgmc_core::experiments::{Centering, Method, ReportFormat};
use fgmc_core::graph::AdjacencyFormat;
use fgmc_core::optimizer::{Baseline, OptimizerKind};
use fgmc_core::RegTarget;

#[derive(Debug, Parser)]
#[command(name = "fgmc", version, about = "Geometric matrix completion with functional maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test error against the rank of a synthetic band-limited matrix
    SynthRank(SynthArgs),
    /// Test error against the sampling density
    SynthDensity(SynthArgs),
    /// Test error against the amount of noise added to the graphs
    SynthNoise(SynthArgs),
    /// MovieLens-100K ratings with similarity graphs
    Ml100k(Ml100kArgs),
    /// Complete a user-supplied matrix with two adjacency files
    Fit(FitArgs),
    /// Compare analytic gradients with finite differences
    CheckGradients(GradArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// JSON file with protocol settings; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
}

/// Fit settings. Each flag, when given, applies to every method.
#[derive(Debug, Args)]
pub struct FitFlags {
    /// Commutativity weight (default 1e-5)
    #[arg(long)]
    pub mu: Option<f64>,
    /// Step size (the protocol default when omitted; 1e-6 for `fit`)
    #[arg(long)]
    pub lr: Option<f64>,
    /// Basis size
    #[arg(long)]
    pub k: Option<usize>,
    /// plain | adaptive
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// none | sgmc
    #[arg(long)]
    pub baseline: Option<Baseline>,
    /// effective | raw
    #[arg(long)]
    pub reg_target: Option<RegTarget>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fraction of observed entries held out for checkpoint selection
    #[arg(long)]
    pub val_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Ranks to sweep (synth-rank) or the fixed rank
    #[arg(long, value_delimiter = ',')]
    pub rank: Vec<usize>,
    /// Densities to sweep (synth-density) or the fixed density
    #[arg(long, value_delimiter = ',')]
    pub density: Vec<f64>,
    /// Noise levels for synth-noise, relative to the in-community weight
    #[arg(long, value_delimiter = ',')]
    pub noise_sigma: Vec<f64>,
    /// Seeds to run; each gives one record per point and method
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Record wall-clock seconds (makes reports differ between runs)
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct Ml100kArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Directory containing u.data
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// `random` or the name of a bundled split such as `u1`
    #[arg(long)]
    pub split: Option<String>,
    /// Held-out fraction for the random split
    #[arg(long)]
    pub test_ratio: Option<f64>,
    /// Neighbours in the similarity graphs
    #[arg(long)]
    pub k_nn: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Subtracted before fitting: none | mean | biases
    #[arg(long)]
    pub centering: Option<Centering>,
    /// Shrinkage of the per-user and per-item offsets
    #[arg(long)]
    pub bias_reg: Option<f64>,
    /// Do not clip predictions to the rating scale
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dense CSV; empty cells or `nan` are missing
    #[arg(long)]
    pub matrix: PathBuf,
    /// Adjacency over the matrix rows
    #[arg(long)]
    pub row_graph: PathBuf,
    /// Adjacency over the matrix columns
    #[arg(long)]
    pub col_graph: PathBuf,
    /// csv | triplet
    #[arg(long, default_value = "csv")]
    pub graph_format: AdjacencyFormat,
    /// Where to write the completed matrix
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with fit settings; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitFlags,
    /// ours | ours-fm | sgmc-baseline
    #[arg(long, default_value = "ours")]
    pub method: Method,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    /// Random problems per objective
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Optional JSON dump of every case
    #[arg(long)]
    pub out: Option<PathBuf>,
}
