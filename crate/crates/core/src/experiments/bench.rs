//! Benchmark suites comparing solvers from a shared initialization.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::density::{beta_gamma_truth, mixture_on_grid, rmise_from_values, sample_beta_gamma, BetaGammaParams, DensityGrid};
use super::metrics::{adjusted_rand_index, geodesic_error, matched_mse, weighted_mse, MseTriple};
use super::sim::{generate_mixture, SimSpec, WeightSpec};
use crate::em::{fit_em, kmeanspp_init, EmConfig, KppConfig};
use crate::error::{Error, Result};
use crate::model::{build_penalty_config, objective, Dataset, GmmParams, PenaltyConfig, PenaltyOverrides};
use crate::report::{FitReport, Solver};
use crate::rtr::{fit_rntr, TrConfig};

/// SplitMix64 finalizer over a combination of indices.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub c: f64,
    pub e: f64,
    pub runs: usize,
    #[serde(default)]
    pub weights: WeightSpec,
}

fn default_solvers() -> Vec<Solver> {
    vec![Solver::Em, Solver::Rntr]
}

fn default_candidates() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub master_seed: u64,
    pub cells: Vec<CellSpec>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<Solver>,
    #[serde(default)]
    pub tr: TrConfig,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub penalty: PenaltyOverrides,
    #[serde(default = "default_candidates")]
    pub kpp_candidates: usize,
}

/// One solver on one generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    pub solver: Solver,
    pub iterations: usize,
    pub accepted_iterations: usize,
    pub termination: String,
    /// Penalized average log-likelihood.
    pub all: f64,
    pub all_unpenalized: f64,
    pub mse: MseTriple,
    pub wmse: MseTriple,
    pub ari: f64,
    pub geodesic: f64,
    pub init_time_s: f64,
    pub time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub solver: Solver,
    pub spec: CellSpec,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub mean_iterations: f64,
    pub mean_accepted_iterations: f64,
    pub mean_time_s: f64,
    pub mean_all: f64,
    pub mse: MseTriple,
    pub wmse: MseTriple,
    pub mean_ari: f64,
    pub mean_geodesic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub rows: Vec<RunRow>,
    pub summary: Vec<CellSummary>,
}

/// Runs `solver` from `init` with the suite configuration.
pub fn run_solver(
    solver: Solver,
    data: &Dataset,
    init: &GmmParams,
    tr: &TrConfig,
    em: &EmConfig,
    pen: &PenaltyConfig,
) -> Result<FitReport> {
    match solver {
        Solver::Em => fit_em(data, init, em, pen),
        Solver::Rntr => fit_rntr(data, init, tr, pen),
    }
}

fn failed_row(cell: usize, run: usize, seed: u64, solver: Solver, err: &Error) -> RunRow {
    RunRow {
        cell,
        run,
        seed,
        solver,
        iterations: 0,
        accepted_iterations: 0,
        termination: "error".into(),
        all: f64::NAN,
        all_unpenalized: f64::NAN,
        mse: MseTriple::default(),
        wmse: MseTriple::default(),
        ari: f64::NAN,
        geodesic: f64::NAN,
        init_time_s: 0.0,
        time_s: 0.0,
        error: Some(err.to_string()),
    }
}

fn run_cell(suite: &SuiteSpec, cell: usize, run: usize) -> Vec<RunRow> {
    let spec = &suite.cells[cell];
    let seed = derive_seed(suite.master_seed, cell as u64, run as u64);
    let sim = match generate_mixture(&SimSpec {
        d: spec.d,
        k: spec.k,
        m: spec.m,
        c: spec.c,
        e: spec.e,
        weights: spec.weights.clone(),
        seed,
    }) {
        Ok(s) => s,
        Err(e) => return suite.solvers.iter().map(|&s| failed_row(cell, run, seed, s, &e)).collect(),
    };
    let start = Instant::now();
    let prepared = build_penalty_config(&sim.data, &suite.penalty).and_then(|pen| {
        let kpp = KppConfig {
            seed: derive_seed(seed, 1, 0),
            n_candidates: suite.kpp_candidates,
        };
        kmeanspp_init(&sim.data, spec.k, &kpp).map(|init| (pen, init))
    });
    let init_time = start.elapsed().as_secs_f64();
    let (pen, init) = match prepared {
        Ok(p) => p,
        Err(e) => return suite.solvers.iter().map(|&s| failed_row(cell, run, seed, s, &e)).collect(),
    };
    suite
        .solvers
        .iter()
        .map(|&solver| {
            let evaluated = run_solver(solver, &sim.data, &init, &suite.tr, &suite.em, &pen).and_then(|fit| {
                let m = sim.data.len() as f64;
                Ok(RunRow {
                    cell,
                    run,
                    seed,
                    solver,
                    iterations: fit.iterations,
                    accepted_iterations: fit.accepted_iterations,
                    termination: fit.termination.name().into(),
                    all: fit.average_log_likelihood(),
                    all_unpenalized: objective(&fit.theta, &sim.data)? / m,
                    mse: matched_mse(&sim.truth, &fit.params)?,
                    wmse: weighted_mse(&sim.truth, &fit.params)?,
                    ari: adjusted_rand_index(&sim.labels, &fit.params.predict(&sim.data))?,
                    geodesic: geodesic_error(&sim.truth, &fit.params)?,
                    init_time_s: init_time,
                    time_s: fit.wall_time.as_secs_f64(),
                    error: None,
                })
            });
            evaluated.unwrap_or_else(|e| failed_row(cell, run, seed, solver, &e))
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn mean_triple<'a>(rows: impl Iterator<Item = &'a MseTriple> + Clone) -> MseTriple {
    MseTriple {
        weights: mean(rows.clone().map(|t| t.weights)),
        means: mean(rows.clone().map(|t| t.means)),
        covariances: mean(rows.map(|t| t.covariances)),
    }
}

/// Generates data for every cell and run, fits all solvers from one shared
/// initialization and aggregates the metrics. Results do not depend on the
/// thread count.
pub fn run_benchmark(suite: &SuiteSpec) -> Result<BenchmarkResults> {
    if suite.cells.is_empty() || suite.solvers.is_empty() {
        return Err(Error::InvalidConfig("suite needs at least one cell and one solver".into()));
    }
    suite.tr.validate()?;
    suite.em.validate()?;
    let jobs: Vec<(usize, usize)> = suite
        .cells
        .iter()
        .enumerate()
        .flat_map(|(c, spec)| (0..spec.runs).map(move |r| (c, r)))
        .collect();
    let rows: Vec<RunRow> = jobs.par_iter().map(|&(c, r)| run_cell(suite, c, r)).collect::<Vec<_>>().concat();

    let mut summary = Vec::new();
    for (cell, spec) in suite.cells.iter().enumerate() {
        for &solver in &suite.solvers {
            let all: Vec<&RunRow> = rows.iter().filter(|r| r.cell == cell && r.solver == solver).collect();
            let ok: Vec<&RunRow> = all.iter().copied().filter(|r| r.error.is_none()).collect();
            summary.push(CellSummary {
                cell,
                solver,
                spec: spec.clone(),
                runs_ok: ok.len(),
                runs_failed: all.len() - ok.len(),
                mean_iterations: mean(ok.iter().map(|r| r.iterations as f64)),
                mean_accepted_iterations: mean(ok.iter().map(|r| r.accepted_iterations as f64)),
                mean_time_s: mean(ok.iter().map(|r| r.time_s)),
                mean_all: mean(ok.iter().map(|r| r.all)),
                mse: mean_triple(ok.iter().map(|r| &r.mse)),
                wmse: mean_triple(ok.iter().map(|r| &r.wmse)),
                mean_ari: mean(ok.iter().map(|r| r.ari)),
                mean_geodesic: mean(ok.iter().map(|r| r.geodesic)),
            });
        }
    }
    Ok(BenchmarkResults { rows, summary })
}

fn default_grid_n() -> usize {
    128
}

fn default_x_range() -> (f64, f64) {
    (0.0, 5.0)
}

fn default_y_range() -> (f64, f64) {
    (0.0, 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStudySpec {
    pub master_seed: u64,
    pub components: Vec<usize>,
    pub runs: usize,
    pub samples: usize,
    #[serde(default = "default_grid_n")]
    pub grid_per_axis: usize,
    #[serde(default = "default_x_range")]
    pub x_range: (f64, f64),
    #[serde(default = "default_y_range")]
    pub y_range: (f64, f64),
    #[serde(default)]
    pub target: BetaGammaParams,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<Solver>,
    #[serde(default)]
    pub tr: TrConfig,
    #[serde(default = "EmConfig::density")]
    pub em: EmConfig,
    #[serde(default)]
    pub penalty: PenaltyOverrides,
}

impl DensityStudySpec {
    pub fn new(master_seed: u64, components: Vec<usize>, runs: usize, samples: usize) -> Self {
        Self {
            master_seed,
            components,
            runs,
            samples,
            grid_per_axis: default_grid_n(),
            x_range: default_x_range(),
            y_range: default_y_range(),
            target: BetaGammaParams::default(),
            solvers: default_solvers(),
            tr: TrConfig::default(),
            em: EmConfig::density(),
            penalty: PenaltyOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub k: usize,
    pub run: usize,
    pub seed: u64,
    pub solver: Solver,
    pub iterations: usize,
    pub accepted_iterations: usize,
    pub all: f64,
    pub rmise: f64,
    pub time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub k: usize,
    pub solver: Solver,
    pub runs_ok: usize,
    pub mean_rmise: f64,
    /// Standard error of the mean RMISE.
    pub se_rmise: f64,
    pub mean_iterations: f64,
    pub mean_time_s: f64,
    pub mean_all: f64,
}

/// Mean fitted density at each grid node for one `(K, solver)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseError {
    pub k: usize,
    pub solver: Solver,
    pub mean_estimate: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DensityResults {
    pub grid: DensityGrid,
    pub rows: Vec<DensityRow>,
    pub summary: Vec<DensitySummary>,
    pub pointwise: Vec<PointwiseError>,
}

/// Fits mixtures to Beta-Gamma samples and scores them by RMISE.
pub fn run_density_study(spec: &DensityStudySpec) -> Result<DensityResults> {
    if spec.components.is_empty() || spec.runs == 0 || spec.solvers.is_empty() {
        return Err(Error::InvalidConfig("density study needs components, runs and solvers".into()));
    }
    let grid = beta_gamma_truth(
        &DensityGrid::new(spec.x_range, spec.y_range, spec.grid_per_axis)?,
        &spec.target,
    )?;
    let width = grid.grid_width();
    let jobs: Vec<(usize, usize)> = spec
        .components
        .iter()
        .flat_map(|&k| (0..spec.runs).map(move |r| (k, r)))
        .collect();
    let per_job: Vec<Vec<(DensityRow, Option<Vec<f64>>)>> = jobs
        .par_iter()
        .map(|&(k, run)| {
            let seed = derive_seed(spec.master_seed, k as u64, run as u64);
            let fail = |solver: Solver, e: &Error| {
                (
                    DensityRow {
                        k,
                        run,
                        seed,
                        solver,
                        iterations: 0,
                        accepted_iterations: 0,
                        all: f64::NAN,
                        rmise: f64::NAN,
                        time_s: 0.0,
                        error: Some(e.to_string()),
                    },
                    None,
                )
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prepared = sample_beta_gamma(&spec.target, spec.samples, &mut rng)
                .and_then(Dataset::new)
                .and_then(|data| {
                    let pen = build_penalty_config(&data, &spec.penalty)?;
                    let kpp = KppConfig {
                        seed: derive_seed(seed, 1, 0),
                        n_candidates: 1,
                    };
                    let init = kmeanspp_init(&data, k, &kpp)?;
                    Ok((data, pen, init))
                });
            let (data, pen, init) = match prepared {
                Ok(p) => p,
                Err(e) => return spec.solvers.iter().map(|&s| fail(s, &e)).collect(),
            };
            spec.solvers
                .iter()
                .map(|&solver| {
                    let out = run_solver(solver, &data, &init, &spec.tr, &spec.em, &pen).and_then(|fit| {
                        let est = mixture_on_grid(&fit.params, &grid)?;
                        let r = rmise_from_values(&grid.values, &est, width)?;
                        Ok((
                            DensityRow {
                                k,
                                run,
                                seed,
                                solver,
                                iterations: fit.iterations,
                                accepted_iterations: fit.accepted_iterations,
                                all: fit.average_log_likelihood(),
                                rmise: r,
                                time_s: fit.wall_time.as_secs_f64(),
                                error: None,
                            },
                            Some(est),
                        ))
                    });
                    out.unwrap_or_else(|e| fail(solver, &e))
                })
                .collect()
        })
        .collect();

    let flat: Vec<(DensityRow, Option<Vec<f64>>)> = per_job.into_iter().flatten().collect();
    let mut summary = Vec::new();
    let mut pointwise = Vec::new();
    for &k in &spec.components {
        for &solver in &spec.solvers {
            let ok: Vec<&(DensityRow, Option<Vec<f64>>)> = flat
                .iter()
                .filter(|(r, _)| r.k == k && r.solver == solver && r.error.is_none())
                .collect();
            let n = ok.len() as f64;
            let mean_rmise = mean(ok.iter().map(|(r, _)| r.rmise));
            let se = if ok.len() > 1 {
                let var = ok.iter().map(|(r, _)| (r.rmise - mean_rmise).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                f64::NAN
            };
            summary.push(DensitySummary {
                k,
                solver,
                runs_ok: ok.len(),
                mean_rmise,
                se_rmise: se,
                mean_iterations: mean(ok.iter().map(|(r, _)| r.iterations as f64)),
                mean_time_s: mean(ok.iter().map(|(r, _)| r.time_s)),
                mean_all: mean(ok.iter().map(|(r, _)| r.all)),
            });
            if !ok.is_empty() {
                let mut acc = DVector::zeros(grid.n_points());
                for (_, est) in &ok {
                    acc += DVector::from_column_slice(est.as_ref().expect("successful rows carry estimates"));
                }
                pointwise.push(PointwiseError {
                    k,
                    solver,
                    mean_estimate: (acc / n).as_slice().to_vec(),
                });
            }
        }
    }
    Ok(DensityResults {
        grid,
        rows: flat.into_iter().map(|(r, _)| r).collect(),
        summary,
        pointwise,
    })
}
