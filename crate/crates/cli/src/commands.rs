//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trgmm_core::em::{kmeanspp_init, EmConfig, KppConfig};
use trgmm_core::experiments::{
    generate_mixture, run_benchmark, run_density_study, run_solver, BenchmarkResults, DensityResults,
    DensityStudySpec, SimSpec, SuiteSpec, WeightSpec,
};
use trgmm_core::model::{build_penalty_config, objective, penalized_objective, GmmParams, PenaltyOverrides};
use trgmm_core::report::{FitReport, Solver};
use trgmm_core::rtr::TrConfig;

use crate::args::{BenchmarkArgs, DensityArgs, FitArgs, GenerateArgs, ScoreArgs, SolverArgs};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, read_data_csv, read_json, write_data_csv, write_json, write_table, ModelFile, ModelMeta, Normalization};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// SHA-256 of the JSON-encoded weights, means and covariances.
pub fn params_hash(params: &GmmParams) -> String {
    let covs: Vec<&[f64]> = params.covariances().iter().map(|c| c.matrix().as_slice()).collect();
    let means: Vec<&[f64]> = params.means().iter().map(|m| m.as_slice()).collect();
    let text = serde_json::to_string(&(params.weights().as_slice(), means, covs)).expect("plain numbers serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let spec = SimSpec {
        d: args.dim,
        k: args.components,
        m: args.samples,
        c: args.separation,
        e: args.eccentricity,
        weights: args.weights.clone().map_or(WeightSpec::Uniform, WeightSpec::Explicit),
        seed: args.seed,
    };
    let sim = generate_mixture(&spec)?;
    let dir = ensure_dir(&args.out_dir)?;
    write_data_csv(&dir.join("data.csv"), sim.data.points())?;
    write_json(&dir.join("truth.json"), &ModelFile::from_params(&sim.truth)?)
}

pub fn solver_configs(args: &SolverArgs) -> (TrConfig, EmConfig) {
    let mut tr = TrConfig {
        grad_tol: args.grad_tol,
        all_diff_tol: args.tol,
        ..TrConfig::default()
    };
    tr.tcg.precondition = !args.no_precondition;
    let mut em = EmConfig {
        all_diff_tol: args.tol,
        ..EmConfig::default()
    };
    if let Some(n) = args.max_iters {
        tr.max_iters = n;
        em.max_iters = n;
    }
    (tr, em)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub solver: Solver,
    pub components: usize,
    pub dim: usize,
    pub n_observations: usize,
    /// Penalized average log-likelihood, the quantity the solvers maximize.
    pub all: f64,
    pub all_unpenalized: f64,
    pub iterations: usize,
    pub accepted_iterations: usize,
    pub grad_norm: Option<f64>,
    pub termination: String,
    pub init_hash: String,
    pub seed: u64,
    pub init_time_s: Option<f64>,
    pub time_s: Option<f64>,
}

fn write_trace(path: &Path, fit: &FitReport) -> CliResult<()> {
    let m = fit.n_observations as f64;
    let rows: Vec<Vec<String>> = fit
        .trace
        .iter()
        .map(|r| {
            let s = r.step.as_ref();
            vec![
                r.iter.to_string(),
                r.objective.to_string(),
                (r.objective / m).to_string(),
                opt(r.grad_norm),
                opt(s.map(|s| s.delta)),
                opt(s.map(|s| s.rho)),
                opt(s.map(|s| s.step_norm)),
                s.map(|s| s.accepted.to_string()).unwrap_or_default(),
                s.map(|s| s.tcg_iterations.to_string()).unwrap_or_default(),
                s.map(|s| s.tcg_stop.name().to_string()).unwrap_or_default(),
                s.map(|s| s.cauchy_fallback.to_string()).unwrap_or_default(),
                opt(s.map(|s| s.model_decrease)),
                r.min_weight.to_string(),
                r.max_block_ratio.to_string(),
            ]
        })
        .collect();
    write_table(
        path,
        &[
            "iter",
            "objective",
            "all",
            "grad_norm",
            "delta",
            "rho",
            "step_norm",
            "accepted",
            "tcg_iterations",
            "tcg_stop",
            "cauchy_fallback",
            "model_decrease",
            "min_weight",
            "max_block_ratio",
        ],
        &rows,
    )
}

pub fn fit(args: &FitArgs) -> CliResult<FitSummary> {
    let raw = read_data_csv(&args.data)?;
    let normalization = if args.normalize {
        Some(Normalization::fit(&raw)?)
    } else {
        None
    };
    let data = match &normalization {
        Some(n) => n.apply(&raw)?,
        None => raw,
    };
    let k = args.components;
    if k == 0 || k > data.len() {
        return Err(CliError::Usage(format!("--components must lie in 1..={}", data.len())));
    }
    let overrides = PenaltyOverrides {
        disabled: args.solver.no_penalty,
        ..PenaltyOverrides::default()
    };
    let pen = build_penalty_config(&data, &overrides)?;

    let start = Instant::now();
    let init = match &args.init {
        Some(path) => {
            let init = read_json::<ModelFile>(path)?.params()?;
            if init.n_components() != k || init.dim() != data.dim() {
                return Err(CliError::Usage(format!(
                    "{}: initial model has K={} d={}, expected K={k} d={}",
                    path.display(),
                    init.n_components(),
                    init.dim(),
                    data.dim()
                )));
            }
            init
        }
        None => kmeanspp_init(
            &data,
            k,
            &KppConfig {
                seed: args.seed,
                n_candidates: args.kpp_candidates,
            },
        )?,
    };
    let init_time = start.elapsed().as_secs_f64();
    let (tr, em) = solver_configs(&args.solver);
    tr.validate()?;
    em.validate()?;
    let fit = run_solver(args.solver.solver, &data, &init, &tr, &em, &pen).map_err(CliError::Solver)?;

    let m = data.len() as f64;
    let time = |t: f64| (!args.deterministic).then_some(t);
    let summary = FitSummary {
        solver: fit.solver,
        components: k,
        dim: data.dim(),
        n_observations: data.len(),
        all: penalized_objective(&fit.theta, &data, &pen)? / m,
        all_unpenalized: objective(&fit.theta, &data)? / m,
        iterations: fit.iterations,
        accepted_iterations: fit.accepted_iterations,
        grad_norm: fit.grad_norm,
        termination: fit.termination.name().into(),
        init_hash: params_hash(&init),
        seed: args.seed,
        init_time_s: time(init_time),
        time_s: time(fit.wall_time.as_secs_f64()),
    };
    let meta = ModelMeta {
        solver: fit.solver,
        iterations: fit.iterations,
        time_s: summary.time_s,
        termination: summary.termination.clone(),
        penalty: overrides,
    };
    let dir = ensure_dir(&args.out_dir)?;
    write_json(&dir.join("model.json"), &ModelFile::from_fit(&fit, normalization, meta))?;
    write_trace(&dir.join("trace.csv"), &fit)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_observations: usize,
    pub all: f64,
    pub all_unpenalized: f64,
    pub log_likelihood: f64,
}

/// Scores `data` under the stored manifold point, after the stored normalization.
pub fn score(args: &ScoreArgs) -> CliResult<ScoreReport> {
    let model: ModelFile = read_json(&args.model)?;
    let raw = read_data_csv(&args.data)?;
    let data = match &model.normalization {
        Some(n) => n.apply(&raw)?,
        None => raw,
    };
    let theta = model.theta()?;
    if theta.block_dim() != data.dim() + 1 {
        return Err(CliError::Usage(format!(
            "model dimension {} does not match {} data columns",
            theta.block_dim() - 1,
            data.dim()
        )));
    }
    let overrides = model.meta.as_ref().map(|m| m.penalty.clone()).unwrap_or_default();
    let pen = build_penalty_config(&data, &overrides)?;
    let m = data.len() as f64;
    let ll = objective(&theta, &data)?;
    Ok(ScoreReport {
        n_observations: data.len(),
        all: penalized_objective(&theta, &data, &pen)? / m,
        all_unpenalized: ll / m,
        log_likelihood: ll,
    })
}

fn triple(t: &trgmm_core::experiments::MseTriple) -> [String; 3] {
    [t.weights.to_string(), t.means.to_string(), t.covariances.to_string()]
}

pub fn write_benchmark(dir: &Path, res: &BenchmarkResults, deterministic: bool) -> CliResult<()> {
    let mut header = vec![
        "cell", "d", "k", "m", "c", "e", "solver", "runs_ok", "runs_failed", "iterations", "accepted_iterations",
    ];
    if !deterministic {
        header.push("mean_time_s");
    }
    header.extend([
        "mean_all", "mse_weights", "mse_means", "mse_covariances", "wmse_weights", "wmse_means", "wmse_covariances",
        "ari", "geodesic",
    ]);
    let rows: Vec<Vec<String>> = res
        .summary
        .iter()
        .map(|s| {
            let mut row = vec![
                s.cell.to_string(),
                s.spec.d.to_string(),
                s.spec.k.to_string(),
                s.spec.m.to_string(),
                s.spec.c.to_string(),
                s.spec.e.to_string(),
                s.solver.name().into(),
                s.runs_ok.to_string(),
                s.runs_failed.to_string(),
                s.mean_iterations.to_string(),
                s.mean_accepted_iterations.to_string(),
            ];
            if !deterministic {
                row.push(s.mean_time_s.to_string());
            }
            row.push(s.mean_all.to_string());
            row.extend(triple(&s.mse));
            row.extend(triple(&s.wmse));
            row.push(s.mean_ari.to_string());
            row.push(s.mean_geodesic.to_string());
            row
        })
        .collect();
    write_table(&dir.join("results.csv"), &header, &rows)?;

    let mut header = vec![
        "cell", "run", "seed", "solver", "iterations", "accepted_iterations", "termination", "all", "all_unpenalized",
        "mse_weights", "mse_means", "mse_covariances", "wmse_weights", "wmse_means", "wmse_covariances", "ari",
        "geodesic",
    ];
    if !deterministic {
        header.extend(["init_time_s", "time_s"]);
    }
    header.push("error");
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.cell.to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                r.solver.name().into(),
                r.iterations.to_string(),
                r.accepted_iterations.to_string(),
                r.termination.clone(),
                r.all.to_string(),
                r.all_unpenalized.to_string(),
            ];
            row.extend(triple(&r.mse));
            row.extend(triple(&r.wmse));
            row.push(r.ari.to_string());
            row.push(r.geodesic.to_string());
            if !deterministic {
                row.push(r.init_time_s.to_string());
                row.push(r.time_s.to_string());
            }
            row.push(r.error.clone().unwrap_or_default());
            row
        })
        .collect();
    write_table(&dir.join("runs.csv"), &header, &rows)
}

pub fn benchmark(args: &BenchmarkArgs) -> CliResult<BenchmarkResults> {
    let mut suite: SuiteSpec = read_json(&args.suite)?;
    if let Some(seed) = args.seed {
        suite.master_seed = seed;
    }
    let res = run_benchmark(&suite)?;
    let dir = ensure_dir(&args.out_dir)?;
    write_benchmark(&dir, &res, args.deterministic)?;
    Ok(res)
}

fn range(v: &[f64], flag: &str) -> CliResult<(f64, f64)> {
    match v {
        [a, b] if a < b => Ok((*a, *b)),
        _ => Err(CliError::Usage(format!("--{flag} takes two increasing numbers, e.g. 0,5"))),
    }
}

pub fn write_density(dir: &Path, res: &DensityResults, deterministic: bool) -> CliResult<()> {
    let mut header = vec!["k", "solver", "runs_ok", "mean_rmise", "se_rmise", "iterations"];
    if !deterministic {
        header.push("mean_time_s");
    }
    header.push("mean_all");
    let rows: Vec<Vec<String>> = res
        .summary
        .iter()
        .map(|s| {
            let mut row = vec![
                s.k.to_string(),
                s.solver.name().into(),
                s.runs_ok.to_string(),
                s.mean_rmise.to_string(),
                s.se_rmise.to_string(),
                s.mean_iterations.to_string(),
            ];
            if !deterministic {
                row.push(s.mean_time_s.to_string());
            }
            row.push(s.mean_all.to_string());
            row
        })
        .collect();
    write_table(&dir.join("density.csv"), &header, &rows)?;

    let mut header = vec!["k", "run", "seed", "solver", "iterations", "accepted_iterations", "all", "rmise"];
    if !deterministic {
        header.push("time_s");
    }
    header.push("error");
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.k.to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                r.solver.name().into(),
                r.iterations.to_string(),
                r.accepted_iterations.to_string(),
                r.all.to_string(),
                r.rmise.to_string(),
            ];
            if !deterministic {
                row.push(r.time_s.to_string());
            }
            row.push(r.error.clone().unwrap_or_default());
            row
        })
        .collect();
    write_table(&dir.join("density_runs.csv"), &header, &rows)?;

    let mut rows = Vec::new();
    for p in &res.pointwise {
        for (r, (x, y)) in res.grid.nodes().enumerate() {
            let truth = res.grid.values[r];
            let est = p.mean_estimate[r];
            rows.push(vec![
                p.k.to_string(),
                p.solver.name().into(),
                x.to_string(),
                y.to_string(),
                truth.to_string(),
                est.to_string(),
                (est - truth).to_string(),
            ]);
        }
    }
    write_table(
        &dir.join("pointwise.csv"),
        &["k", "solver", "x", "y", "truth", "mean_estimate", "error"],
        &rows,
    )
}

pub fn density_spec(args: &DensityArgs) -> CliResult<DensityStudySpec> {
    let mut spec = DensityStudySpec::new(args.seed, args.components.clone(), args.runs, args.samples);
    spec.grid_per_axis = args.grid_per_axis;
    spec.x_range = range(&args.x_range, "x-range")?;
    spec.y_range = range(&args.y_range, "y-range")?;
    spec.target.copula_rho = args.copula_rho;
    spec.solvers = args.solvers.clone();
    Ok(spec)
}

pub fn density(args: &DensityArgs) -> CliResult<DensityResults> {
    let res = run_density_study(&density_spec(args)?)?;
    let dir = ensure_dir(&args.out_dir)?;
    write_density(&dir, &res, args.deterministic)?;
    Ok(res)
}
