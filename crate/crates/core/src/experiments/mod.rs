//! Synthetic benchmarks, the density-estimation study and evaluation metrics.

pub mod bench;
pub mod density;
pub mod metrics;
pub mod sim;

pub use bench::{
    derive_seed, run_benchmark, run_density_study, run_solver, BenchmarkResults, CellSpec, CellSummary, DensityResults,
    DensityRow, DensityStudySpec, DensitySummary, PointwiseError, RunRow, SuiteSpec,
};
pub use density::{beta_gamma_pdf, beta_gamma_truth, mixture_on_grid, rmise, sample_beta_gamma, BetaGammaParams, DensityGrid};
pub use metrics::{adjusted_rand_index, geodesic_error, match_components, matched_mse, weighted_mse, MetricsReport, MseTriple};
pub use sim::{generate_mixture, separation_margin, SimSpec, SimulatedMixture, WeightSpec};
