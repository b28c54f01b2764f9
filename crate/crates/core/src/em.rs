//! k-means++ seeding and the (penalized) EM baseline.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    backward_transform, forward_transform, penalty, responsibilities, Dataset, GmmParams, PenaltyConfig,
    Responsibilities,
};
use crate::report::{FitReport, IterRecord, Solver, Termination};
use crate::spd::{symmetrize, SpdMatrix, ThetaPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KppConfig {
    pub seed: u64,
    /// Candidates drawn per seeding step; the one lowering the potential most wins.
    pub n_candidates: usize,
}

impl Default for KppConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_candidates: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub all_diff_tol: f64,
    /// Closed-form maximizer of the penalized surrogate instead of plain EM.
    pub map_mode: bool,
    /// Eigenvalue floor for covariances when `map_mode` is off. `None`
    /// uses `1e-8 tr(C) / d` with `C` the sample covariance.
    pub cov_floor: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 1500,
            all_diff_tol: 1e-10,
            map_mode: true,
            cov_floor: None,
        }
    }
}

impl EmConfig {
    /// Iteration budget used for density estimation.
    pub fn density() -> Self {
        Self {
            max_iters: 3000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.all_diff_tol < 0.0 {
            return Err(Error::InvalidConfig("all_diff_tol must be nonnegative".into()));
        }
        if let Some(f) = self.cov_floor {
            if !(f > 0.0) {
                return Err(Error::InvalidConfig("cov_floor must be positive".into()));
            }
        }
        Ok(())
    }
}

fn squared_distance(a: nalgebra::DVectorView<'_, f64>, b: nalgebra::DVectorView<'_, f64>) -> f64 {
    (a - b).norm_squared()
}

/// Clamps eigenvalues from below.
pub(crate) fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> Result<SpdMatrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| if v.is_finite() { v.max(floor) } else { floor });
    SpdMatrix::new(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

fn default_floor(data: &Dataset) -> f64 {
    let tr = data.covariance(0).trace();
    let f = 1e-8 * tr / data.dim() as f64;
    if f > 0.0 {
        f
    } else {
        1e-12
    }
}

/// Seeds `k` centers by D^2 sampling, refines with one Lloyd assignment and
/// builds floored per-cluster covariances.
pub fn kmeanspp_init(data: &Dataset, k: usize, cfg: &KppConfig) -> Result<GmmParams> {
    let m = data.len();
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one component".into()));
    }
    if m < k {
        return Err(Error::TooFewPoints { needed: k, got: m });
    }
    let x = data.points();
    let row = |i: usize| x.row(i).transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen = vec![false; m];
    let mut centers = Vec::with_capacity(k);
    let first = rng.random_range(0..m);
    chosen[first] = true;
    centers.push(first);
    let mut d2: Vec<f64> = (0..m).map(|i| squared_distance(row(i).as_view(), row(first).as_view())).collect();

    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let draw = |rng: &mut ChaCha8Rng| -> usize {
            if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                for (i, &w) in d2.iter().enumerate() {
                    if w > 0.0 {
                        if u < w {
                            return i;
                        }
                        u -= w;
                    }
                }
                d2.iter().rposition(|&w| w > 0.0).expect("positive total")
            } else {
                let free: Vec<usize> = (0..m).filter(|&i| !chosen[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..cfg.n_candidates.max(1) {
            let c = draw(&mut rng);
            let updated: Vec<f64> = (0..m)
                .map(|i| d2[i].min(squared_distance(row(i).as_view(), row(c).as_view())))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((c, potential, updated));
            }
        }
        let (c, _, updated) = best.expect("at least one candidate");
        chosen[c] = true;
        centers.push(c);
        d2 = updated;
    }

    // One Lloyd assignment; ties go to the lowest index.
    let mut labels = vec![0usize; m];
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (j, &c) in centers.iter().enumerate() {
            let dist = if i == c { 0.0 } else { squared_distance(row(i).as_view(), row(c).as_view()) };
            if dist < best.1 {
                best = (j, dist);
            }
        }
        *label = best.0;
    }

    let d = data.dim();
    let floor = default_floor(data).max(1e-12);
    let fallback = floor_eigenvalues(&data.covariance(0), floor)?;
    let mut counts = vec![0usize; k];
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<usize> = (0..m).filter(|&i| labels[i] == j).collect();
        counts[j] = members.len();
        let mean = if members.is_empty() {
            row(centers[j])
        } else {
            members.iter().fold(DVector::zeros(d), |acc, &i| acc + row(i)) / members.len() as f64
        };
        let cov = if members.len() >= 2 {
            let scatter = members.iter().fold(DMatrix::zeros(d, d), |acc, &i| {
                let diff = row(i) - &mean;
                acc + &diff * diff.transpose()
            });
            floor_eigenvalues(&(scatter / members.len() as f64), floor)?
        } else {
            fallback.clone()
        };
        means.push(mean);
        covs.push(cov);
    }
    let raw: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
    let total: f64 = raw.iter().sum();
    GmmParams::new(DVector::from_iterator(k, raw.iter().map(|c| c / total)), means, covs)
}

fn record(iter: usize, theta: &ThetaPoint, objective: f64, cfg: &PenaltyConfig) -> IterRecord {
    let psi = cfg.psi.matrix().norm();
    IterRecord {
        iter,
        objective,
        grad_norm: None,
        step: None,
        min_weight: theta.weights().min(),
        max_block_ratio: theta.s_blocks().iter().map(|s| s.matrix().norm()).fold(0.0, f64::max) / psi,
    }
}

fn weighted_scatter(data: &Dataset, resp: &Responsibilities, l: usize) -> DMatrix<f64> {
    let yt = data.augmented_columns();
    let mut w = yt.clone();
    for (i, mut col) in w.column_iter_mut().enumerate() {
        col *= resp.f[(i, l)];
    }
    symmetrize(&(w * yt.transpose()))
}

fn m_step(
    data: &Dataset,
    resp: &Responsibilities,
    cfg: &EmConfig,
    pen: &PenaltyConfig,
    floor: f64,
) -> Result<ThetaPoint> {
    let k = resp.f.ncols();
    let m = data.len() as f64;
    let d = data.dim();
    let masses = resp.masses();
    for (l, &n) in masses.iter().enumerate() {
        let prior_mass = if cfg.map_mode { pen.rho } else { 0.0 };
        if !(n >= 1e-12) && prior_mass == 0.0 {
            return Err(Error::DegenerateComponent { component: l, mass: n });
        }
    }
    if cfg.map_mode {
        let mut blocks = Vec::with_capacity(k);
        for l in 0..k {
            let s = (weighted_scatter(data, resp, l) + pen.psi.matrix() * pen.beta) / (masses[l] + pen.rho);
            blocks.push(SpdMatrix::new(s).map_err(|_| Error::DegenerateComponent {
                component: l,
                mass: masses[l],
            })?);
        }
        let denom = m + k as f64 * pen.zeta;
        let w: Vec<f64> = (0..k).map(|l| (masses[l] + pen.zeta) / denom).collect();
        let eta = DVector::from_iterator(k - 1, (0..k - 1).map(|l| w[l].ln() - w[k - 1].ln()));
        ThetaPoint::new(blocks, eta)
    } else {
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for l in 0..k {
            let s = weighted_scatter(data, resp, l) / masses[l];
            let mu: DVector<f64> = s.view((0, d), (d, 1)).column(0).into_owned();
            let sigma = s.view((0, 0), (d, d)) - &mu * mu.transpose();
            means.push(mu);
            covs.push(floor_eigenvalues(&sigma, floor)?);
        }
        let weights = DVector::from_iterator(k, masses.iter().map(|n| n / m));
        let weights = &weights / weights.sum();
        forward_transform(&GmmParams::new(weights, means, covs)?)
    }
}

/// EM from `init`, scored with the same penalized objective as the
/// trust-region solver.
pub fn fit_em(data: &Dataset, init: &GmmParams, cfg: &EmConfig, pen: &PenaltyConfig) -> Result<FitReport> {
    let start = Instant::now();
    cfg.validate()?;
    if init.dim() != data.dim() {
        return Err(Error::Initialization(format!(
            "initial parameters have dimension {}, data has {}",
            init.dim(),
            data.dim()
        )));
    }
    let floor = cfg.cov_floor.unwrap_or_else(|| default_floor(data));
    let m = data.len() as f64;
    let mut theta = forward_transform(init).map_err(|e| Error::Initialization(e.to_string()))?;
    crate::model::check_penalty(&theta, pen)?;
    let mut resp = responsibilities(&theta, data)?;
    let mut obj = resp.log_likelihood() + penalty(&theta, pen);
    let mut trace = vec![record(0, &theta, obj, pen)];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    for t in 1..=cfg.max_iters {
        let next = m_step(data, &resp, cfg, pen, floor)?;
        let next_resp = responsibilities(&next, data)?;
        let next_obj = next_resp.log_likelihood() + penalty(&next, pen);
        if !next_obj.is_finite() {
            return Err(Error::NonFinite("EM objective"));
        }
        trace.push(record(t, &next, next_obj, pen));
        iterations = t;
        let diff = (next_obj - obj).abs() / m;
        theta = next;
        resp = next_resp;
        obj = next_obj;
        if diff < cfg.all_diff_tol {
            termination = Termination::AllDifference;
            break;
        }
    }

    let params = backward_transform(&theta)?;
    Ok(FitReport {
        solver: Solver::Em,
        theta,
        params,
        trace,
        iterations,
        accepted_iterations: iterations,
        objective: obj,
        n_observations: data.len(),
        grad_norm: None,
        wall_time: start.elapsed(),
        termination,
    })
}
