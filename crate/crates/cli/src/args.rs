use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trgmm_core::report::Solver;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "trgmm", version, about = "Gaussian mixture fitting with a Riemannian trust-region solver")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "GMM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic mixture and a sample from it.
    Generate(GenerateArgs),
    /// Fit a mixture to a data CSV.
    Fit(FitArgs),
    /// Evaluate a saved model on a data CSV.
    Score(ScoreArgs),
    /// Run a synthetic benchmark suite.
    Benchmark(BenchmarkArgs),
    /// Density estimation study on the Beta-Gamma target.
    Density(DensityArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub components: usize,
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub separation: f64,
    #[arg(long)]
    pub eccentricity: f64,
    /// Comma-separated mixing weights; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Receives `data.csv` and `truth.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value = "rntr")]
    pub solver: Solver,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop when the average log-likelihood changes by less than this.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Gradient-norm tolerance of the trust-region solver.
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Fit the plain likelihood without penalties.
    #[arg(long)]
    pub no_penalty: bool,
    /// Disable the quasi-Newton preconditioner of the inner solver.
    #[arg(long)]
    pub no_precondition: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub components: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed of the k-means++ initialization shared by all solvers.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub kpp_candidates: usize,
    /// Start from a saved model instead of k-means++.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Z-score every column before fitting.
    #[arg(long)]
    pub normalize: bool,
    /// Leave wall-clock times out of every output file.
    #[arg(long)]
    pub deterministic: bool,
    /// Receives `model.json`, `trace.csv` and `summary.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Suite JSON with `master_seed` and `cells`.
    #[arg(long)]
    pub suite: PathBuf,
    /// Overrides the suite's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub deterministic: bool,
    /// Receives `results.csv` and `runs.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,5,10")]
    pub components: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub grid_per_axis: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,5")]
    pub x_range: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,10")]
    pub y_range: Vec<f64>,
    /// Correlation of the Gaussian copula joining the marginals.
    #[arg(long, default_value_t = 0.5)]
    pub copula_rho: f64,
    #[arg(long, value_delimiter = ',', default_value = "em,rntr")]
    pub solvers: Vec<Solver>,
    #[arg(long)]
    pub deterministic: bool,
    /// Receives `density.csv`, `density_runs.csv` and `pointwise.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}
