//! Bivariate Beta-Gamma target with a Gaussian copula and the grid RMISE.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Gamma, Normal};

use crate::error::{Error, Result};
use crate::model::GmmParams;

/// Cell-centered grid on a box with `n_per_axis^2` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub n_per_axis: usize,
    /// Row-major over `(ix, iy)`.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), n_per_axis: usize) -> Result<Self> {
        if n_per_axis == 0 || !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
            return Err(Error::InvalidConfig("grid needs a nonempty box and at least one node".into()));
        }
        Ok(Self {
            x_range,
            y_range,
            n_per_axis,
            values: vec![0.0; n_per_axis * n_per_axis],
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_per_axis * self.n_per_axis
    }

    fn spacing(&self) -> (f64, f64) {
        let n = self.n_per_axis as f64;
        ((self.x_range.1 - self.x_range.0) / n, (self.y_range.1 - self.y_range.0) / n)
    }

    /// `sqrt(dx dy)`, so its square is the cell area.
    pub fn grid_width(&self) -> f64 {
        let (dx, dy) = self.spacing();
        (dx * dy).sqrt()
    }

    pub fn node(&self, r: usize) -> (f64, f64) {
        let (dx, dy) = self.spacing();
        let (ix, iy) = (r / self.n_per_axis, r % self.n_per_axis);
        (
            self.x_range.0 + (ix as f64 + 0.5) * dx,
            self.y_range.0 + (iy as f64 + 0.5) * dy,
        )
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.n_points()).map(|r| self.node(r))
    }

    /// Grid over the box `[0, 5] x [0, 10]` with 128 nodes per axis.
    pub fn standard() -> Self {
        Self::new((0.0, 5.0), (0.0, 10.0), 128).expect("valid box")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaGammaParams {
    pub beta_a: f64,
    pub beta_b: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub copula_rho: f64,
}

impl Default for BetaGammaParams {
    fn default() -> Self {
        Self {
            beta_a: 0.5,
            beta_b: 0.5,
            gamma_shape: 1.0,
            gamma_rate: 1.0,
            copula_rho: 0.5,
        }
    }
}

struct Marginals {
    beta: Beta,
    gamma: Gamma,
    normal: Normal,
    rho: f64,
}

impl Marginals {
    fn new(p: &BetaGammaParams) -> Result<Self> {
        if !(p.copula_rho > -1.0 && p.copula_rho < 1.0) {
            return Err(Error::InvalidConfig("copula correlation must lie in (-1, 1)".into()));
        }
        let err = |e: statrs::distribution::BetaError| Error::InvalidConfig(e.to_string());
        Ok(Self {
            beta: Beta::new(p.beta_a, p.beta_b).map_err(err)?,
            gamma: Gamma::new(p.gamma_shape, p.gamma_rate).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            normal: Normal::standard(),
            rho: p.copula_rho,
        })
    }

    fn pdf(&self, x: f64, y: f64) -> f64 {
        if !(x > 0.0 && x < 1.0 && y > 0.0) {
            return 0.0;
        }
        let marginal = self.beta.pdf(x) * self.gamma.pdf(y);
        if self.rho == 0.0 {
            return marginal;
        }
        let clamp = |u: f64| u.clamp(1e-16, 1.0 - 1e-16);
        let a = self.normal.inverse_cdf(clamp(self.beta.cdf(x)));
        let b = self.normal.inverse_cdf(clamp(self.gamma.cdf(y)));
        let r2 = self.rho * self.rho;
        let copula = (-(r2 * (a * a + b * b) - 2.0 * self.rho * a * b) / (2.0 * (1.0 - r2))).exp() / (1.0 - r2).sqrt();
        marginal * copula
    }
}

/// Joint density of the Beta-Gamma pair at `(x, y)`.
pub fn beta_gamma_pdf(params: &BetaGammaParams, x: f64, y: f64) -> Result<f64> {
    Ok(Marginals::new(params)?.pdf(x, y))
}

/// Fills `grid` with the true density.
pub fn beta_gamma_truth(grid: &DensityGrid, params: &BetaGammaParams) -> Result<DensityGrid> {
    let marg = Marginals::new(params)?;
    let mut out = grid.clone();
    out.values = grid.nodes().map(|(x, y)| marg.pdf(x, y)).collect();
    Ok(out)
}

/// `m x 2` sample from the copula construction.
pub fn sample_beta_gamma<R: Rng + ?Sized>(params: &BetaGammaParams, m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let marg = Marginals::new(params)?;
    let rho = params.copula_rho;
    let clamp = |u: f64| u.clamp(1e-16, 1.0 - 1e-16);
    let mut out = DMatrix::zeros(m, 2);
    for i in 0..m {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let w = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
        out[(i, 0)] = marg.beta.inverse_cdf(clamp(marg.normal.cdf(z1)));
        out[(i, 1)] = marg.gamma.inverse_cdf(clamp(marg.normal.cdf(w)));
    }
    Ok(out)
}

/// Evaluates a two-dimensional mixture density at the grid nodes.
pub fn mixture_on_grid(model: &GmmParams, grid: &DensityGrid) -> Result<Vec<f64>> {
    if model.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: model.dim(),
        });
    }
    Ok(grid.nodes().map(|(x, y)| model.pdf(&DVector::from_row_slice(&[x, y]))).collect())
}

/// `sqrt((1/N) sum_r (f(g_r) - fhat(g_r))^2 dg^2)`.
pub fn rmise_from_values(truth: &[f64], estimate: &[f64], grid_width: f64) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyData);
    }
    let sq: Vec<f64> = truth
        .iter()
        .zip(estimate)
        .map(|(f, g)| (f - g).powi(2) * grid_width * grid_width)
        .collect();
    Ok((crate::model::pairwise_sum(&sq) / truth.len() as f64).sqrt())
}

/// RMISE of `model` against the true density stored in `grid`.
pub fn rmise(model: &GmmParams, grid: &DensityGrid) -> Result<f64> {
    rmise_from_values(&grid.values, &mixture_on_grid(model, grid)?, grid.grid_width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::SpdMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn smooth_model() -> GmmParams {
        GmmParams::new(
            DVector::from_row_slice(&[0.6, 0.4]),
            vec![DVector::from_row_slice(&[1.5, 3.0]), DVector::from_row_slice(&[3.0, 6.0])],
            vec![
                SpdMatrix::from_row_slice(2, &[0.5, 0.1, 0.1, 1.0]).unwrap(),
                SpdMatrix::from_row_slice(2, &[0.8, -0.2, -0.2, 2.0]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn standard_grid_geometry() {
        let g = DensityGrid::standard();
        assert_eq!(g.n_points(), 16384);
        assert!((g.grid_width() - (50.0f64).sqrt() / 128.0).abs() < 1e-15);
        assert_eq!(g.node(0), (5.0 / 256.0, 10.0 / 256.0));
    }

    #[test]
    fn marginal_closed_forms() {
        let p = BetaGammaParams {
            copula_rho: 0.0,
            ..BetaGammaParams::default()
        };
        let m = Marginals::new(&p).unwrap();
        assert!((m.beta.pdf(0.5) - 2.0 / PI).abs() < 1e-12);
        for y in [0.1, 1.0, 3.7] {
            assert!((m.gamma.pdf(y) - (-y as f64).exp()).abs() < 1e-12);
        }
        let grid = DensityGrid::new((0.0, 1.0), (0.0, 4.0), 16).unwrap();
        let truth = beta_gamma_truth(&grid, &p).unwrap();
        for (r, (x, y)) in grid.nodes().enumerate() {
            assert!((truth.values[r] - m.beta.pdf(x) * m.gamma.pdf(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn copula_density_integrates_to_one() {
        let p = BetaGammaParams::default();
        // Substitution x = sin^2(t) removes the Beta endpoint singularities.
        let n = 400;
        let mut total = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * (PI / 2.0) / n as f64;
            let x = t.sin().powi(2);
            let jac = 2.0 * t.sin() * t.cos() * (PI / 2.0) / n as f64;
            for j in 0..n {
                let y = (j as f64 + 0.5) * 30.0 / n as f64;
                total += beta_gamma_pdf(&p, x, y).unwrap() * jac * 30.0 / n as f64;
            }
        }
        assert!((total - 1.0).abs() < 1e-2, "{total}");
    }

    #[test]
    fn rmise_cases() {
        let grid = DensityGrid::new((0.0, 5.0), (0.0, 10.0), 32).unwrap();
        let model = smooth_model();
        let mut exact = grid.clone();
        exact.values = mixture_on_grid(&model, &grid).unwrap();
        assert_eq!(rmise(&model, &exact).unwrap(), 0.0);

        let eps = 0.01;
        let shifted: Vec<f64> = exact.values.iter().map(|v| v + eps).collect();
        let r = rmise_from_values(&shifted, &exact.values, grid.grid_width()).unwrap();
        assert!((r - eps * grid.grid_width()).abs() < 1e-15);
    }

    #[test]
    fn refinement_keeps_integrated_error() {
        let model = smooth_model();
        let other = model.permuted(&[1, 0]).unwrap();
        let other = GmmParams::new(
            DVector::from_row_slice(&[0.5, 0.5]),
            other.means().to_vec(),
            other.covariances().to_vec(),
        )
        .unwrap();
        let scaled = |n: usize| {
            let mut grid = DensityGrid::new((0.0, 5.0), (0.0, 10.0), n).unwrap();
            grid.values = mixture_on_grid(&other, &grid).unwrap();
            rmise(&model, &grid).unwrap() * (grid.n_points() as f64).sqrt()
        };
        let (coarse, fine) = (scaled(64), scaled(128));
        assert!(((fine - coarse) / coarse).abs() < 0.05, "{coarse} vs {fine}");
    }

    #[test]
    fn sample_lies_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_beta_gamma(&BetaGammaParams::default(), 500, &mut rng).unwrap();
        assert!(s.column(0).iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(s.column(1).iter().all(|&y| y >= 0.0));
        let mean_x = s.column(0).mean();
        assert!((mean_x - 0.5).abs() < 0.05);
    }
}
