//! The reformulated GMM log-likelihood on augmented observations
//! `y = (x, 1)` together with its Wishart / Dirichlet penalizers.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{log_sum_exp, SpdMatrix, ThetaPoint};

/// Observations `x_i` (rows) and their augmentation `y_i = (x_i, 1)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: DMatrix<f64>,
    augmented: DMatrix<f64>,
    // (d+1) x m; each observation is a column.
    augmented_t: DMatrix<f64>,
}

impl Dataset {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        let (m, d) = points.shape();
        if m == 0 {
            return Err(Error::EmptyData);
        }
        if d == 0 {
            return Err(Error::InvalidParams("observations need at least one coordinate".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        let mut augmented = DMatrix::from_element(m, d + 1, 1.0);
        augmented.columns_mut(0, d).copy_from(&points);
        let augmented_t = augmented.transpose();
        Ok(Self {
            points,
            augmented,
            augmented_t,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::EmptyData);
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(m, d, |i, j| rows[i][j]))
    }

    /// Number of observations `m`.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Observation dimension `d`.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn augmented(&self) -> &DMatrix<f64> {
        &self.augmented
    }

    /// Augmented observations as columns, `(d+1) x m`.
    pub fn augmented_columns(&self) -> &DMatrix<f64> {
        &self.augmented_t
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Sample mean of the observations.
    pub fn mean(&self) -> DVector<f64> {
        self.points.row_mean().transpose()
    }

    /// Sample covariance with denominator `m - denominator_offset`.
    pub fn covariance(&self, denominator_offset: usize) -> DMatrix<f64> {
        let m = self.len();
        let mu = self.mean();
        let mut centered = self.points.clone();
        for mut row in centered.row_iter_mut() {
            row -= mu.transpose();
        }
        let denom = (m.saturating_sub(denominator_offset)).max(1) as f64;
        crate::spd::symmetrize(&(centered.transpose() * &centered / denom))
    }
}

/// Builds the augmented dataset from an `m x d` matrix of observations.
pub fn augment(points: &DMatrix<f64>) -> Result<Dataset> {
    Dataset::new(points.clone())
}

/// Classical mixture parameters `(alpha_j, mu_j, Sigma_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: DVector<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<SpdMatrix>,
}

impl GmmParams {
    pub fn new(weights: DVector<f64>, means: Vec<DVector<f64>>, covariances: Vec<SpdMatrix>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidParams("at least one component required".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidParams(format!(
                "{} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParams("weights must be positive".into()));
        }
        if (weights.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParams(format!("weights sum to {}", weights.sum())));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidParams("zero-dimensional means".into()));
        }
        for (mu, cov) in means.iter().zip(&covariances) {
            if mu.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: mu.len() });
            }
            if cov.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: cov.dim() });
            }
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("means"));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[SpdMatrix] {
        &self.covariances
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log N(x; mu_j, Sigma_j)`.
    pub fn component_log_pdf(&self, j: usize, x: &DVector<f64>) -> f64 {
        gaussian_log_pdf(x, &self.means[j], &self.covariances[j])
    }

    /// `log sum_j alpha_j N(x; mu_j, Sigma_j)`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        log_sum_exp((0..self.n_components()).map(|j| self.weights[j].ln() + self.component_log_pdf(j, x)))
    }

    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Classical log-likelihood `sum_i log sum_j alpha_j N(x_i; mu_j, Sigma_j)`.
    pub fn log_likelihood(&self, data: &Dataset) -> f64 {
        let terms: Vec<f64> = (0..data.len()).map(|i| self.log_pdf(&data.point(i))).collect();
        pairwise_sum(&terms)
    }

    /// Component with the highest posterior probability for each observation.
    pub fn predict(&self, data: &Dataset) -> Vec<usize> {
        (0..data.len())
            .map(|i| {
                let x = data.point(i);
                (0..self.n_components())
                    .map(|j| self.weights[j].ln() + self.component_log_pdf(j, &x))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, v)| if v > best.1 { (j, v) } else { best })
                    .0
            })
            .collect()
    }

    /// Permutes components: output component `j` is input component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(
            DVector::from_iterator(perm.len(), perm.iter().map(|&p| self.weights[p])),
            perm.iter().map(|&p| self.means[p].clone()).collect(),
            perm.iter().map(|&p| self.covariances[p].clone()).collect(),
        )
    }
}

/// Multivariate normal log-density.
pub fn gaussian_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &SpdMatrix) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let z = cov
        .chol()
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    -0.5 * d * (2.0 * PI).ln() - 0.5 * cov.log_det() - 0.5 * z.norm_squared()
}

/// Sums in fixed-order pairwise fashion. Deterministic and accurate to
/// `O(log n)` round-off.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Maps `(alpha, mu, Sigma)` to `S_j = [[Sigma + mu mu^T, mu], [mu^T, 1]]`
/// and `eta_j = log(alpha_j / alpha_K)`.
pub fn forward_transform(params: &GmmParams) -> Result<ThetaPoint> {
    let d = params.dim();
    let k = params.n_components();
    let mut blocks = Vec::with_capacity(k);
    for (mu, cov) in params.means.iter().zip(&params.covariances) {
        let mut s = DMatrix::zeros(d + 1, d + 1);
        s.view_mut((0, 0), (d, d)).copy_from(&(cov.matrix() + mu * mu.transpose()));
        s.view_mut((0, d), (d, 1)).copy_from(mu);
        s.view_mut((d, 0), (1, d)).copy_from(&mu.transpose());
        s[(d, d)] = 1.0;
        blocks.push(SpdMatrix::new(s)?);
    }
    let last = params.weights[k - 1].ln();
    let eta = DVector::from_iterator(k - 1, (0..k - 1).map(|j| params.weights[j].ln() - last));
    ThetaPoint::new(blocks, eta)
}

/// Inverse of [`forward_transform`]. Divides by the corner entry
/// `s = S[d, d]` so the map is total on the manifold:
/// `mu = S[0..d, d] / s`, `Sigma = S[0..d, 0..d] / s - mu mu^T`.
pub fn backward_transform(theta: &ThetaPoint) -> Result<GmmParams> {
    let d = theta.block_dim() - 1;
    if d == 0 {
        return Err(Error::InvalidParams("blocks must have dimension at least 2".into()));
    }
    let mut means = Vec::with_capacity(theta.n_components());
    let mut covs = Vec::with_capacity(theta.n_components());
    for (j, block) in theta.s_blocks().iter().enumerate() {
        let s = block.matrix();
        let corner = s[(d, d)];
        let mu: DVector<f64> = s.view((0, d), (d, 1)).column(0) / corner;
        let sigma = s.view((0, 0), (d, d)) / corner - &mu * mu.transpose();
        let cov = SpdMatrix::new(sigma).map_err(|_| Error::DegenerateBlock { component: j })?;
        means.push(mu);
        covs.push(cov);
    }
    let weights = theta.weights();
    // Renormalize to absorb round-off from the softmax.
    let weights = &weights / weights.sum();
    GmmParams::new(weights, means, covs)
}

/// `log q(y; S) = log(sqrt(2 pi) e^{1/2} N(y; 0, S))`.
pub fn log_component_density(y: DVectorView<'_, f64>, s: &SpdMatrix) -> f64 {
    let n = y.len() as f64;
    let z = s
        .chol()
        .solve_lower_triangular(&y.into_owned())
        .expect("cholesky factor has a positive diagonal");
    log_density_constant(n) - 0.5 * s.log_det() - 0.5 * z.norm_squared()
}

/// `q(y; S)`; may underflow to zero, use [`log_component_density`] for
/// anything numerical.
pub fn component_density(y: DVectorView<'_, f64>, s: &SpdMatrix) -> f64 {
    log_component_density(y, s).exp()
}

fn log_density_constant(n: f64) -> f64 {
    // 1/2 log(2 pi) + 1/2 - n/2 log(2 pi)
    0.5 * (2.0 * PI).ln() + 0.5 - 0.5 * n * (2.0 * PI).ln()
}

/// Per-observation posteriors `f_l^i` and `log sum_j h^i(theta_j)`.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    /// `m x K`.
    pub f: DMatrix<f64>,
    pub row_logsum: DVector<f64>,
}

impl Responsibilities {
    /// Builds posteriors from an `m x K` matrix of `log h^i(theta_j)`.
    pub fn from_log_terms(log_h: &DMatrix<f64>) -> Self {
        let (m, k) = log_h.shape();
        let mut f = DMatrix::zeros(m, k);
        let mut row_logsum = DVector::zeros(m);
        for i in 0..m {
            let row = log_h.row(i);
            let lse = log_sum_exp(row.iter().cloned());
            row_logsum[i] = lse;
            for j in 0..k {
                f[(i, j)] = (row[j] - lse).exp();
            }
        }
        Self { f, row_logsum }
    }

    /// `sum_i f_l^i`.
    pub fn masses(&self) -> DVector<f64> {
        DVector::from_iterator(self.f.ncols(), self.f.column_iter().map(|c| pairwise_sum(c.as_slice())))
    }

    pub fn log_likelihood(&self) -> f64 {
        pairwise_sum(self.row_logsum.as_slice())
    }
}

fn check_data(theta: &ThetaPoint, data: &Dataset) -> Result<()> {
    if theta.block_dim() != data.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: theta.block_dim(),
            got: data.dim() + 1,
        });
    }
    Ok(())
}

/// `m x K` matrix of `log h^i(theta_j)`.
pub fn log_terms(theta: &ThetaPoint, data: &Dataset) -> Result<DMatrix<f64>> {
    check_data(theta, data)?;
    let m = data.len();
    let k = theta.n_components();
    let n = theta.block_dim() as f64;
    let log_w = {
        let full = theta.full_eta();
        let lse = log_sum_exp(full.iter().cloned());
        full.map(|e| e - lse)
    };
    let yt = data.augmented_columns();
    let mut out = DMatrix::zeros(m, k);
    for (j, s) in theta.s_blocks().iter().enumerate() {
        let z = s
            .chol()
            .solve_lower_triangular(yt)
            .expect("cholesky factor has a positive diagonal");
        let base = log_w[j] + log_density_constant(n) - 0.5 * s.log_det();
        for (i, col) in z.column_iter().enumerate() {
            out[(i, j)] = base - 0.5 * col.norm_squared();
        }
    }
    Ok(out)
}

/// Posteriors via a log-sum-exp stabilized softmax.
pub fn responsibilities(theta: &ThetaPoint, data: &Dataset) -> Result<Responsibilities> {
    Ok(Responsibilities::from_log_terms(&log_terms(theta, data)?))
}

/// Reformulated log-likelihood `sum_i log sum_j h^i(theta_j)`.
pub fn objective(theta: &ThetaPoint, data: &Dataset) -> Result<f64> {
    let lt = log_terms(theta, data)?;
    let rows: Vec<f64> = lt.row_iter().map(|r| log_sum_exp(r.iter().cloned())).collect();
    Ok(pairwise_sum(&rows))
}

/// Hyperparameters of the penalizers. `None` entries take defaults from
/// [`build_penalty_config`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyOverrides {
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub nu: Option<f64>,
    pub zeta: Option<f64>,
    /// Use the full sample covariance for `Lambda` instead of its diagonal.
    #[serde(default)]
    pub full_covariance: bool,
    /// Turn all penalties off.
    #[serde(default)]
    pub disabled: bool,
}

/// Wishart prior on each `S_j` and Dirichlet-type prior on the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub psi: SpdMatrix,
    pub rho: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub nu: f64,
    pub lambda_vec: DVector<f64>,
    pub lambda_mat: DMatrix<f64>,
    pub zeta: f64,
}

impl PenaltyConfig {
    /// Assembles `Psi = [[(gamma/beta) Lambda + kappa l l^T, kappa l], [kappa l^T, kappa]]`
    /// and sets `rho = gamma (d + nu + 1) + beta`.
    pub fn from_hyper(
        lambda_vec: DVector<f64>,
        lambda_mat: DMatrix<f64>,
        gamma: f64,
        beta: f64,
        kappa: f64,
        nu: f64,
        zeta: f64,
    ) -> Result<Self> {
        let d = lambda_vec.len();
        if lambda_mat.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: lambda_mat.nrows(),
            });
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidConfig("beta must be positive; use PenaltyConfig::disabled".into()));
        }
        if zeta < 0.0 || gamma < 0.0 || kappa <= 0.0 {
            return Err(Error::InvalidConfig("need gamma >= 0, kappa > 0, zeta >= 0".into()));
        }
        let mut psi = DMatrix::zeros(d + 1, d + 1);
        let top = &lambda_mat * (gamma / beta) + &lambda_vec * lambda_vec.transpose() * kappa;
        psi.view_mut((0, 0), (d, d)).copy_from(&top);
        psi.view_mut((0, d), (d, 1)).copy_from(&(&lambda_vec * kappa));
        psi.view_mut((d, 0), (1, d)).copy_from(&(lambda_vec.transpose() * kappa));
        psi[(d, d)] = kappa;
        let psi = SpdMatrix::new(psi)?;
        Ok(Self {
            psi,
            rho: gamma * (d as f64 + nu + 1.0) + beta,
            beta,
            gamma,
            kappa,
            nu,
            lambda_vec,
            lambda_mat,
            zeta,
        })
    }

    /// All penalties zero; `Psi` is an inert identity.
    pub fn disabled(d: usize) -> Self {
        Self {
            psi: SpdMatrix::identity(d + 1),
            rho: 0.0,
            beta: 0.0,
            gamma: 0.0,
            kappa: 0.0,
            nu: 0.0,
            lambda_vec: DVector::zeros(d),
            lambda_mat: DMatrix::zeros(d, d),
            zeta: 0.0,
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.rho == 0.0 && self.beta == 0.0 && self.zeta == 0.0
    }

    pub fn dim(&self) -> usize {
        self.lambda_vec.len()
    }
}

/// `psi(S) = -(rho/2) log det S - (beta/2) tr(Psi S^{-1})`.
pub fn penalty_matrix_term(s: &SpdMatrix, cfg: &PenaltyConfig) -> f64 {
    if cfg.rho == 0.0 && cfg.beta == 0.0 {
        return 0.0;
    }
    let trace = s.inverse().component_mul(cfg.psi.matrix()).sum();
    -0.5 * cfg.rho * s.log_det() - 0.5 * cfg.beta * trace
}

/// `phi(eta) = zeta (sum_{j<=K} eta_j - K log sum_k exp(eta_k))`, `eta_K = 0`.
pub fn penalty_weight_term(eta: &DVector<f64>, zeta: f64) -> f64 {
    if zeta == 0.0 {
        return 0.0;
    }
    let k = eta.len() + 1;
    let lse = log_sum_exp(eta.iter().cloned().chain(std::iter::once(0.0)));
    zeta * (eta.sum() - k as f64 * lse)
}

/// `Pen(theta) = sum_j psi(S_j) + phi(eta)`.
pub fn penalty(theta: &ThetaPoint, cfg: &PenaltyConfig) -> f64 {
    theta.s_blocks().iter().map(|s| penalty_matrix_term(s, cfg)).sum::<f64>() + penalty_weight_term(theta.eta(), cfg.zeta)
}

/// `L_pen(theta) = L(theta) + Pen(theta)`.
pub fn penalized_objective(theta: &ThetaPoint, data: &Dataset, cfg: &PenaltyConfig) -> Result<f64> {
    check_penalty(theta, cfg)?;
    Ok(objective(theta, data)? + penalty(theta, cfg))
}

pub(crate) fn check_penalty(theta: &ThetaPoint, cfg: &PenaltyConfig) -> Result<()> {
    if cfg.psi.dim() != theta.block_dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.block_dim(),
            got: cfg.psi.dim(),
        });
    }
    Ok(())
}

/// Default penalty: `lambda` = sample mean, `Lambda` = diagonal of the
/// sample covariance, `gamma = beta = kappa = 0.01`, `nu = d`, `zeta = 1`.
pub fn build_penalty_config(data: &Dataset, overrides: &PenaltyOverrides) -> Result<PenaltyConfig> {
    let d = data.dim();
    if overrides.disabled {
        return Ok(PenaltyConfig::disabled(d));
    }
    if data.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: data.len(),
        });
    }
    let mean = data.mean();
    let cov = data.covariance(1);
    if let Some(j) = (0..d).find(|&j| !(cov[(j, j)] > 0.0)) {
        return Err(Error::DegenerateData(format!("coordinate {} has zero variance", j + 1)));
    }
    let lambda_mat = if overrides.full_covariance {
        cov
    } else {
        DMatrix::from_diagonal(&cov.diagonal())
    };
    PenaltyConfig::from_hyper(
        mean,
        lambda_mat,
        overrides.gamma.unwrap_or(0.01),
        overrides.beta.unwrap_or(0.01),
        overrides.kappa.unwrap_or(0.01),
        overrides.nu.unwrap_or(d as f64),
        overrides.zeta.unwrap_or(1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data_2d() -> Dataset {
        Dataset::from_rows(&[vec![0.0, 1.0], vec![1.5, -0.5], vec![-1.0, 0.3], vec![0.2, 2.0]]).unwrap()
    }

    #[test]
    fn augment_examples() {
        let d = augment(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        assert_eq!(d.augmented(), &DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 1.0]));
        let z = augment(&DMatrix::zeros(3, 2)).unwrap();
        assert!(z.augmented().column(2).iter().all(|&v| v == 1.0));
        assert_eq!(z.augmented().columns(0, 2).into_owned(), DMatrix::zeros(3, 2));
        assert_eq!(augment(&DMatrix::zeros(0, 2)).unwrap_err(), Error::EmptyData);
    }

    #[test]
    fn forward_transform_examples() {
        let p = GmmParams::new(
            DVector::from_element(1, 1.0),
            vec![DVector::zeros(2)],
            vec![SpdMatrix::identity(2)],
        )
        .unwrap();
        let t = forward_transform(&p).unwrap();
        assert_eq!(t.s_blocks()[0].matrix(), &DMatrix::identity(3, 3));
        assert_eq!(t.eta().len(), 0);

        let two = |a: f64| {
            GmmParams::new(
                DVector::from_row_slice(&[a, 1.0 - a]),
                vec![DVector::zeros(1), DVector::zeros(1)],
                vec![SpdMatrix::identity(1), SpdMatrix::identity(1)],
            )
            .unwrap()
        };
        assert_eq!(forward_transform(&two(0.5)).unwrap().eta()[0], 0.0);
        assert_relative_eq!(forward_transform(&two(0.8)).unwrap().eta()[0], 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn backward_transform_examples() {
        let t = ThetaPoint::new(vec![SpdMatrix::identity(3)], DVector::zeros(0)).unwrap();
        let p = backward_transform(&t).unwrap();
        assert_eq!(p.means()[0], DVector::zeros(2));
        assert_relative_eq!(p.covariances()[0].matrix(), &DMatrix::identity(2, 2));
        assert_eq!(p.weights()[0], 1.0);

        let t3 = ThetaPoint::new(vec![SpdMatrix::identity(2); 3], DVector::zeros(2)).unwrap();
        let p3 = backward_transform(&t3).unwrap();
        for w in p3.weights().iter() {
            assert_relative_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_handles_nearly_singular_block() {
        let s = SpdMatrix::from_row_slice(2, &[1.0, 1.0, 1.0, 1.0001]).unwrap();
        let t = ThetaPoint::new(vec![s], DVector::zeros(0)).unwrap();
        let p = backward_transform(&t).unwrap();
        let c = 1.0001;
        assert_relative_eq!(p.means()[0][0], 1.0 / c, max_relative = 1e-12);
        assert_relative_eq!(p.covariances()[0].matrix()[(0, 0)], 1.0 / c - 1.0 / (c * c), max_relative = 1e-8);
    }

    #[test]
    fn component_density_examples() {
        let y = DVector::from_row_slice(&[0.0, 1.0]);
        let q = component_density(y.as_view(), &SpdMatrix::identity(2));
        assert_relative_eq!(q, 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);

        // Reformulation identity against the standard normal pdf.
        let mu = DVector::from_row_slice(&[0.4, -1.2]);
        let sigma = SpdMatrix::from_row_slice(2, &[1.3, 0.2, 0.2, 0.6]).unwrap();
        let p = GmmParams::new(DVector::from_element(1, 1.0), vec![mu.clone()], vec![sigma.clone()]).unwrap();
        let theta = forward_transform(&p).unwrap();
        let s = &theta.s_blocks()[0];
        let x = DVector::from_row_slice(&[1.0, -0.3]);
        let y = DVector::from_row_slice(&[1.0, -0.3, 1.0]);
        let diff = &x - &mu;
        let quad = (diff.transpose() * sigma.inverse() * &diff)[(0, 0)];
        let det = sigma.matrix().determinant();
        let oracle = (-0.5 * quad).exp() / (2.0 * PI * det.sqrt());
        assert_relative_eq!(component_density(y.as_view(), s), oracle, max_relative = 1e-12);

        let far = DVector::from_row_slice(&[1e4, 1.0]);
        let l = log_component_density(far.as_view(), &SpdMatrix::identity(2));
        assert!(l.is_finite() && l < -1e7);
    }

    #[test]
    fn responsibilities_examples() {
        let data = data_2d();
        let t = ThetaPoint::new(vec![SpdMatrix::identity(3); 3], DVector::zeros(2)).unwrap();
        let r = responsibilities(&t, &data).unwrap();
        for v in r.f.iter() {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }

        let lt = DMatrix::from_row_slice(1, 2, &[0.0, 1e6]);
        let r = Responsibilities::from_log_terms(&lt);
        assert!((r.f[(0, 1)] - 1.0).abs() <= 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let blocks = (0..3)
            .map(|_| {
                let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
                SpdMatrix::new(&a * a.transpose() + DMatrix::identity(3, 3) * 0.3).unwrap()
            })
            .collect();
        let t = ThetaPoint::new(blocks, DVector::from_row_slice(&[0.3, -0.7])).unwrap();
        let r = responsibilities(&t, &data).unwrap();
        for row in r.f.row_iter() {
            assert!((row.sum() - 1.0).abs() <= 1e-10);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn objective_examples() {
        let one = Dataset::from_rows(&[vec![0.0]]).unwrap();
        let t = ThetaPoint::new(vec![SpdMatrix::identity(2)], DVector::zeros(0)).unwrap();
        assert_relative_eq!(objective(&t, &one).unwrap(), -0.5 * (2.0 * PI).ln(), epsilon = 1e-14);
        assert_relative_eq!(objective(&t, &one).unwrap(), -0.918938533204672, epsilon = 1e-12);

        let data = data_2d();
        let doubled = Dataset::new(DMatrix::from_fn(8, 2, |i, j| data.points()[(i % 4, j)])).unwrap();
        let t = ThetaPoint::new(vec![SpdMatrix::identity(3); 2], DVector::from_row_slice(&[0.5])).unwrap();
        assert_relative_eq!(
            objective(&t, &doubled).unwrap(),
            2.0 * objective(&t, &data).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn penalty_matrix_examples() {
        let d = 2;
        let cfg = PenaltyConfig::from_hyper(DVector::zeros(d), DMatrix::identity(d, d), 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(cfg.psi.matrix(), &DMatrix::identity(3, 3));
        assert_relative_eq!(
            penalty_matrix_term(&SpdMatrix::identity(3), &cfg),
            -cfg.beta * 3.0 / 2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn penalty_weight_examples() {
        let k = 4;
        assert_relative_eq!(
            penalty_weight_term(&DVector::zeros(k - 1), 0.7),
            -0.7 * k as f64 * (k as f64).ln(),
            epsilon = 1e-13
        );
        assert!(penalty_weight_term(&DVector::from_element(1, -1e3), 1.0) < -900.0);
        assert_eq!(penalty_weight_term(&DVector::from_row_slice(&[3.0, -2.0]), 0.0), 0.0);
    }

    #[test]
    fn zero_penalty_is_plain_objective() {
        let data = data_2d();
        let t = ThetaPoint::new(vec![SpdMatrix::identity(3); 2], DVector::from_row_slice(&[0.2])).unwrap();
        let cfg = PenaltyConfig::disabled(2);
        assert_eq!(penalized_objective(&t, &data, &cfg).unwrap(), objective(&t, &data).unwrap());
    }

    #[test]
    fn penalty_config_defaults() {
        let raw = data_2d();
        let mean = raw.mean();
        let sd = raw.covariance(1).diagonal().map(f64::sqrt);
        let z = Dataset::new(DMatrix::from_fn(raw.len(), 2, |i, j| (raw.points()[(i, j)] - mean[j]) / sd[j])).unwrap();
        let cfg = build_penalty_config(&z, &PenaltyOverrides::default()).unwrap();
        assert!(cfg.lambda_vec.norm() < 1e-14);
        assert_relative_eq!(cfg.lambda_mat, DMatrix::identity(2, 2), epsilon = 1e-14);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.01]);
        assert_relative_eq!(cfg.psi.matrix(), &expected, epsilon = 1e-14);
        assert!((cfg.rho - cfg.gamma * (2.0 + cfg.nu + 1.0) - cfg.beta).abs() <= 1e-12);

        let flat = Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        assert!(matches!(
            build_penalty_config(&flat, &PenaltyOverrides::default()),
            Err(Error::DegenerateData(_))
        ));
    }
}
