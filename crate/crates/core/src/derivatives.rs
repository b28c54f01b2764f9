//! Riemannian gradient and Hessian-vector product of the penalized
//! objective, plus finite-difference checks along the retraction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_penalty, log_terms, pairwise_sum, penalty, Dataset, PenaltyConfig, Responsibilities};
use crate::spd::{inner_product_unchecked, retract, SymMatrix, TangentVector, ThetaPoint};

/// Gradient together with the objective value computed on the way.
#[derive(Debug, Clone)]
pub struct GradResult {
    pub grad: TangentVector,
    pub norm: f64,
    pub objective_value: f64,
}

/// Per-point cache reused by every Hessian-vector product at that point.
#[derive(Debug, Clone)]
pub struct HvpWorkspace {
    generation: u64,
    resp: Responsibilities,
    weights: DVector<f64>,
    // S_l^{-1} Y^T, (d+1) x m.
    solves: Vec<DMatrix<f64>>,
    // sum_i f_l^i y_i y_i^T.
    scatter: Vec<DMatrix<f64>>,
    masses: DVector<f64>,
    objective_value: f64,
}

impl HvpWorkspace {
    pub fn new(theta: &ThetaPoint, data: &Dataset, cfg: &PenaltyConfig) -> Result<Self> {
        check_penalty(theta, cfg)?;
        let lt = log_terms(theta, data)?;
        let resp = Responsibilities::from_log_terms(&lt);
        let yt = data.augmented_columns();
        let per_component: Vec<(DMatrix<f64>, DMatrix<f64>)> = theta
            .s_blocks()
            .par_iter()
            .enumerate()
            .map(|(l, s)| {
                let solve = s.solve(yt);
                let mut weighted = yt.clone();
                for (i, mut col) in weighted.column_iter_mut().enumerate() {
                    col *= resp.f[(i, l)];
                }
                let scatter = crate::spd::symmetrize(&(weighted * yt.transpose()));
                (solve, scatter)
            })
            .collect();
        let (solves, scatter) = per_component.into_iter().unzip();
        let objective_value = resp.log_likelihood() + penalty(theta, cfg);
        if !objective_value.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        Ok(Self {
            generation: theta.generation(),
            masses: resp.masses(),
            resp,
            weights: theta.weights(),
            solves,
            scatter,
            objective_value,
        })
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn responsibilities(&self) -> &Responsibilities {
        &self.resp
    }

    /// Penalized objective at the point the workspace was built for.
    pub fn objective_value(&self) -> f64 {
        self.objective_value
    }

    fn check(&self, theta: &ThetaPoint) -> Result<()> {
        if self.generation != theta.generation() {
            return Err(Error::StaleWorkspace {
                built: self.generation,
                current: theta.generation(),
            });
        }
        Ok(())
    }

    /// Gradient from the cached quantities.
    pub fn gradient(&self, theta: &ThetaPoint, cfg: &PenaltyConfig) -> Result<GradResult> {
        self.check(theta)?;
        let k = theta.n_components();
        let m = self.resp.f.nrows() as f64;
        let mut blocks = Vec::with_capacity(k);
        for (l, s) in theta.s_blocks().iter().enumerate() {
            let data_part = (&self.scatter[l] - s.matrix() * self.masses[l]) * 0.5;
            let pen_part = (s.matrix() * cfg.rho - cfg.psi.matrix() * cfg.beta) * 0.5;
            blocks.push(SymMatrix::from_symmetric_unchecked(crate::spd::symmetrize(&(data_part - pen_part))));
        }
        let eta = DVector::from_iterator(
            k - 1,
            (0..k - 1).map(|r| {
                self.masses[r] - m * self.weights[r] + cfg.zeta * (1.0 - k as f64 * self.weights[r])
            }),
        );
        let grad = TangentVector::new(blocks, eta);
        debug_assert!(grad
            .s_blocks
            .iter()
            .all(|b| crate::spd::relative_asymmetry(b.as_matrix()) == 0.0));
        let norm = inner_product_unchecked(theta, &grad, &grad).max(0.0).sqrt();
        Ok(GradResult {
            grad,
            norm,
            objective_value: self.objective_value,
        })
    }
}

/// Riemannian gradient of the penalized objective.
pub fn riemannian_gradient(theta: &ThetaPoint, data: &Dataset, cfg: &PenaltyConfig) -> Result<GradResult> {
    HvpWorkspace::new(theta, data, cfg)?.gradient(theta, cfg)
}

/// Builds the workspace once and returns it with the gradient.
pub fn gradient_and_workspace(
    theta: &ThetaPoint,
    data: &Dataset,
    cfg: &PenaltyConfig,
) -> Result<(GradResult, HvpWorkspace)> {
    let ws = HvpWorkspace::new(theta, data, cfg)?;
    let g = ws.gradient(theta, cfg)?;
    Ok((g, ws))
}

/// Riemannian Hessian of the penalized objective applied to `xi`.
pub fn hessian_vector_product(
    theta: &ThetaPoint,
    xi: &TangentVector,
    data: &Dataset,
    cfg: &PenaltyConfig,
    ws: &HvpWorkspace,
) -> Result<TangentVector> {
    ws.check(theta)?;
    let k = theta.n_components();
    if xi.s_blocks.len() != k || xi.eta.len() != k - 1 {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: xi.s_blocks.len(),
        });
    }
    let f = &ws.resp.f;
    let m = f.nrows();
    let yt = data.augmented_columns();
    if yt.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: yt.ncols() });
    }
    let xi_eta = |l: usize| if l + 1 < k { xi.eta[l] } else { 0.0 };

    // a_l^i for all components.
    let s_inv_xi: Vec<DMatrix<f64>> = theta
        .s_blocks()
        .iter()
        .zip(&xi.s_blocks)
        .map(|(s, x)| s.inverse() * x.as_matrix())
        .collect();
    let a_cols: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|l| {
            let w = &ws.solves[l];
            let v = xi.s_blocks[l].as_matrix() * w;
            let tr = s_inv_xi[l].trace();
            let shift = 2.0 * xi_eta(l) - tr;
            w.column_iter()
                .zip(v.column_iter())
                .map(|(wc, vc)| wc.dot(&vc) + shift)
                .collect()
        })
        .collect();
    let a_bar: Vec<f64> = (0..m).map(|i| (0..k).map(|l| f[(i, l)] * a_cols[l][i]).sum()).collect();

    let results: Vec<(DMatrix<f64>, f64)> = (0..k)
        .into_par_iter()
        .map(|l| {
            let s = theta.s_blocks()[l].matrix();
            let c: Vec<f64> = (0..m).map(|i| f[(i, l)] * (a_cols[l][i] - a_bar[i])).collect();
            let sum_c = pairwise_sum(&c);
            let mut weighted = yt.clone();
            for (i, mut col) in weighted.column_iter_mut().enumerate() {
                col *= c[i];
            }
            let d_mat = weighted * yt.transpose();
            let ma = &ws.scatter[l] * &s_inv_xi[l];
            let mut block = (&ma + ma.transpose() - (d_mat - s * sum_c)) * -0.25;
            if cfg.beta != 0.0 {
                let pa = cfg.psi.matrix() * &s_inv_xi[l];
                block -= (&pa + pa.transpose()) * (0.25 * cfg.beta);
            }
            (crate::spd::symmetrize(&block), sum_c)
        })
        .collect();

    let alpha = &ws.weights;
    let mixed: f64 = (0..k - 1).map(|j| alpha[j] * xi.eta[j]).sum();
    let mut blocks = Vec::with_capacity(k);
    let mut sums = Vec::with_capacity(k);
    for (b, sc) in results {
        blocks.push(SymMatrix::from_symmetric_unchecked(b));
        sums.push(sc);
    }
    let eta = DVector::from_iterator(
        k - 1,
        (0..k - 1).map(|r| {
            let centered = alpha[r] * (xi.eta[r] - mixed);
            0.5 * sums[r] - m as f64 * centered - k as f64 * cfg.zeta * centered
        }),
    );
    Ok(TangentVector::new(blocks, eta))
}

/// Random tangent vector of unit metric norm.
pub fn random_tangent<R: Rng + ?Sized>(theta: &ThetaPoint, rng: &mut R) -> TangentVector {
    let k = theta.n_components();
    let n = theta.block_dim();
    let coords: Vec<f64> = (0..theta.tangent_dim()).map(|_| rng.sample(StandardNormal)).collect();
    let mut xi = TangentVector::from_coords(k, n, &coords).expect("coordinate count matches tangent dimension");
    // Map to the tangent space at theta so the direction is well scaled.
    for (b, s) in xi.s_blocks.iter_mut().zip(theta.s_blocks()) {
        let l = s.chol();
        *b = SymMatrix::from_symmetric_unchecked(crate::spd::symmetrize(&(l * b.as_matrix() * l.transpose())));
    }
    let norm = inner_product_unchecked(theta, &xi, &xi).sqrt();
    xi.scaled(1.0 / norm)
}

/// Result of a finite-difference check.
#[derive(Debug, Clone, Default)]
pub struct FdReport {
    /// Relative error per trial.
    pub errors: Vec<f64>,
    pub max_rel_err: f64,
    pub worst_direction: Option<TangentVector>,
}

impl FdReport {
    fn push(&mut self, err: f64, dir: &TangentVector) {
        if self.errors.is_empty() || err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst_direction = Some(dir.clone());
        }
        self.errors.push(err);
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.errors.iter().all(|e| *e <= tol)
    }
}

/// Penalized objective along `t -> R_theta(t xi)`.
pub fn objective_along(theta: &ThetaPoint, xi: &TangentVector, t: f64, data: &Dataset, cfg: &PenaltyConfig) -> Result<f64> {
    crate::model::penalized_objective(&retract(theta, &xi.scaled(t))?, data, cfg)
}

/// Central-difference directional derivative, step `h`.
pub fn fd_directional_derivative(
    theta: &ThetaPoint,
    xi: &TangentVector,
    h: f64,
    data: &Dataset,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let fp = objective_along(theta, xi, h, data, cfg)?;
    let fm = objective_along(theta, xi, -h, data, cfg)?;
    Ok((fp - fm) / (2.0 * h))
}

/// Five-point second derivative, step `h`.
pub fn fd_second_derivative(
    theta: &ThetaPoint,
    xi: &TangentVector,
    h: f64,
    data: &Dataset,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let f = |t: f64| objective_along(theta, xi, t, data, cfg);
    let (f2, f1, f0, fm1, fm2) = (f(2.0 * h)?, f(h)?, f(0.0)?, f(-h)?, f(-2.0 * h)?);
    Ok((-f2 + 16.0 * f1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h))
}

/// Compares `<grad, xi>` with central differences (h = 1e-5) over random
/// unit tangents.
pub fn fd_gradient_check<R: Rng + ?Sized>(
    theta: &ThetaPoint,
    data: &Dataset,
    cfg: &PenaltyConfig,
    trials: usize,
    rng: &mut R,
) -> Result<FdReport> {
    let grad = riemannian_gradient(theta, data, cfg)?.grad;
    fd_gradient_check_with(theta, data, cfg, &grad, trials, rng)
}

/// Same as [`fd_gradient_check`] for a caller-supplied gradient.
pub fn fd_gradient_check_with<R: Rng + ?Sized>(
    theta: &ThetaPoint,
    data: &Dataset,
    cfg: &PenaltyConfig,
    grad: &TangentVector,
    trials: usize,
    rng: &mut R,
) -> Result<FdReport> {
    let mut report = FdReport::default();
    for _ in 0..trials {
        let xi = random_tangent(theta, rng);
        let analytic = inner_product_unchecked(theta, grad, &xi);
        let fd = fd_directional_derivative(theta, &xi, 1e-5, data, cfg)?;
        report.push((analytic - fd).abs() / fd.abs().max(1.0), &xi);
    }
    Ok(report)
}

/// Compares `<H[xi], xi>` with a five-point second difference (h = 1e-3).
pub fn fd_hessian_check<R: Rng + ?Sized>(
    theta: &ThetaPoint,
    data: &Dataset,
    cfg: &PenaltyConfig,
    trials: usize,
    rng: &mut R,
) -> Result<FdReport> {
    let ws = HvpWorkspace::new(theta, data, cfg)?;
    let mut report = FdReport::default();
    for _ in 0..trials {
        let xi = random_tangent(theta, rng);
        let hxi = hessian_vector_product(theta, &xi, data, cfg, &ws)?;
        let analytic = inner_product_unchecked(theta, &hxi, &xi);
        let fd = fd_second_derivative(theta, &xi, 1e-3, data, cfg)?;
        report.push((analytic - fd).abs() / fd.abs().max(1.0), &xi);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PenaltyOverrides;
    use crate::spd::{inner_product, SpdMatrix};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
    }

    fn instance(d: usize, k: usize, m: usize, seed: u64) -> (ThetaPoint, Dataset, PenaltyConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Dataset::new(DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap();
        let blocks = (0..k).map(|_| random_spd(d + 1, &mut rng)).collect();
        let eta = DVector::from_fn(k - 1, |_, _| rng.random_range(-1.0..1.0));
        let theta = ThetaPoint::new(blocks, eta).unwrap();
        let cfg = crate::model::build_penalty_config(&data, &PenaltyOverrides::default()).unwrap();
        (theta, data, cfg)
    }

    #[test]
    fn single_gaussian_mle_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Dataset::new(DMatrix::from_fn(30, 2, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let y = data.augmented();
        let s = SpdMatrix::new(y.transpose() * y / 30.0).unwrap();
        let theta = ThetaPoint::new(vec![s], DVector::zeros(0)).unwrap();
        let g = riemannian_gradient(&theta, &data, &PenaltyConfig::disabled(2)).unwrap();
        assert!(g.grad.s_blocks[0].as_matrix().amax() < 1e-12);
    }

    #[test]
    fn penalty_mode_is_stationary() {
        let (_, data, cfg) = instance(2, 1, 10, 1);
        let s = SpdMatrix::new(cfg.psi.matrix() * (cfg.beta / cfg.rho)).unwrap();
        let theta = ThetaPoint::new(vec![s.clone()], DVector::zeros(0)).unwrap();
        let with_data = riemannian_gradient(&theta, &data, &cfg).unwrap();
        let without = riemannian_gradient(&theta, &data, &PenaltyConfig::disabled(2)).unwrap();
        let diff = with_data.grad.s_blocks[0].as_matrix() - without.grad.s_blocks[0].as_matrix();
        assert!(diff.amax() < 1e-14);
    }

    #[test]
    fn symmetric_components_have_zero_weight_gradient() {
        let (_, data, cfg) = instance(2, 2, 20, 2);
        let theta = ThetaPoint::new(vec![SpdMatrix::identity(3); 2], DVector::zeros(1)).unwrap();
        let g = riemannian_gradient(&theta, &data, &cfg).unwrap();
        assert!(g.grad.eta[0].abs() < 1e-12);
    }

    #[test]
    fn weight_gradient_forms_agree() {
        let (theta, data, cfg) = instance(2, 3, 25, 3);
        let ws = HvpWorkspace::new(&theta, &data, &cfg).unwrap();
        let g = ws.gradient(&theta, &cfg).unwrap();
        let f = &ws.responsibilities().f;
        let alpha = theta.weights();
        for r in 0..2 {
            let long: f64 = (0..25).map(|i| f[(i, r)] - alpha[r] * f.row(i).sum()).sum::<f64>()
                + cfg.zeta * (1.0 - 3.0 * alpha[r]);
            assert_relative_eq!(g.grad.eta[r], long, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (seed, (d, k)) in [(1, 1), (2, 2), (3, 3), (2, 3)].into_iter().enumerate() {
            let (theta, data, cfg) = instance(d, k, 40, seed as u64);
            let report = fd_gradient_check(&theta, &data, &cfg, 10, &mut rng).unwrap();
            assert!(report.passes(1e-5), "d={d} K={k}: {}", report.max_rel_err);
        }
    }

    #[test]
    fn perturbed_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (theta, data, cfg) = instance(2, 2, 30, 4);
        let mut g = riemannian_gradient(&theta, &data, &cfg).unwrap().grad;
        g.eta[0] += 1e-3;
        let report = fd_gradient_check_with(&theta, &data, &cfg, &g, 10, &mut rng).unwrap();
        assert!(!report.passes(1e-5));
    }

    #[test]
    fn zero_trials_give_empty_report() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (theta, data, cfg) = instance(1, 1, 5, 0);
        let report = fd_gradient_check(&theta, &data, &cfg, 0, &mut rng).unwrap();
        assert!(report.errors.is_empty() && report.worst_direction.is_none());
    }

    #[test]
    fn hessian_matches_second_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (seed, (d, k)) in [(1, 1), (2, 2), (3, 3), (1, 3)].into_iter().enumerate() {
            let (theta, data, cfg) = instance(d, k, 40, 100 + seed as u64);
            let report = fd_hessian_check(&theta, &data, &cfg, 10, &mut rng).unwrap();
            assert!(report.passes(1e-4), "d={d} K={k}: {}", report.max_rel_err);
        }
    }

    #[test]
    fn hessian_is_linear_and_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (theta, data, cfg) = instance(2, 3, 30, 7);
        let ws = HvpWorkspace::new(&theta, &data, &cfg).unwrap();
        let h = |v: &TangentVector| hessian_vector_product(&theta, v, &data, &cfg, &ws).unwrap();
        let zero = h(&theta.zero_tangent());
        assert_eq!(inner_product(&theta, &zero, &zero).unwrap(), 0.0);
        for _ in 0..20 {
            let xi = random_tangent(&theta, &mut rng);
            let chi = random_tangent(&theta, &mut rng);
            let (hx, hc) = (h(&xi), h(&chi));
            let lhs = inner_product(&theta, &hx, &chi).unwrap();
            let rhs = inner_product(&theta, &xi, &hc).unwrap();
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1.0));
            let mut comb = xi.scaled(2.0);
            comb.axpy(-0.5, &chi);
            let mut expected = hx.scaled(2.0);
            expected.axpy(-0.5, &hc);
            let mut diff = h(&comb);
            diff.axpy(-1.0, &expected);
            let scale = inner_product(&theta, &expected, &expected).unwrap().sqrt().max(1.0);
            assert!(inner_product(&theta, &diff, &diff).unwrap().sqrt() <= 1e-9 * scale);
        }
    }

    #[test]
    fn stale_workspace_is_rejected() {
        let (theta, data, cfg) = instance(1, 2, 10, 9);
        let ws = HvpWorkspace::new(&theta, &data, &cfg).unwrap();
        let other = ThetaPoint::new(theta.s_blocks().to_vec(), theta.eta().clone()).unwrap();
        let err = hessian_vector_product(&other, &other.zero_tangent(), &data, &cfg, &ws).unwrap_err();
        assert!(matches!(err, Error::StaleWorkspace { .. }));
    }
}
