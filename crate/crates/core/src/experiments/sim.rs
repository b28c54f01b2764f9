//! Synthetic mixtures with controlled separation and eccentricity.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, GmmParams};
use crate::spd::SpdMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    #[default]
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    /// Separation: `||mu_i - mu_j||^2 >= c max(tr Sigma_i, tr Sigma_j)`.
    pub c: f64,
    /// Eccentricity `sqrt(lambda_max / lambda_min)`.
    pub e: f64,
    #[serde(default)]
    pub weights: WeightSpec,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulatedMixture {
    pub truth: GmmParams,
    pub data: Dataset,
    pub labels: Vec<usize>,
}

const MAX_RETRIES: usize = 1000;
// Closest pair sits this factor above the bound.
const SEPARATION_SLACK: f64 = 1.1;

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Geometric eigenvalues with unit geometric mean and `sqrt(max/min) = e`.
pub fn eccentric_spectrum(d: usize, e: f64) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    (0..d).map(|k| e.powf(2.0 * k as f64 / (d - 1) as f64 - 1.0)).collect()
}

/// `min_{i != j} ||mu_i - mu_j||^2 - c max(tr Sigma_i, tr Sigma_j)`;
/// infinite for one component.
pub fn separation_margin(params: &GmmParams, c: f64) -> f64 {
    let k = params.n_components();
    let mut margin = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            let dist = (&params.means()[i] - &params.means()[j]).norm_squared();
            let tr = params.covariances()[i].matrix().trace().max(params.covariances()[j].matrix().trace());
            margin = margin.min(dist - c * tr);
        }
    }
    margin
}

fn validate(spec: &SimSpec) -> Result<Vec<f64>> {
    if spec.d == 0 || spec.k == 0 || spec.m == 0 {
        return Err(Error::InvalidConfig("d, K and m must be positive".into()));
    }
    if !(spec.c > 0.0 && spec.c.is_finite()) {
        return Err(Error::InvalidConfig("separation c must be positive".into()));
    }
    if !(spec.e >= 1.0 && spec.e.is_finite()) {
        return Err(Error::InvalidConfig("eccentricity e must be at least 1".into()));
    }
    match &spec.weights {
        WeightSpec::Uniform => Ok(vec![1.0 / spec.k as f64; spec.k]),
        WeightSpec::Explicit(w) => {
            if w.len() != spec.k || w.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidConfig("explicit weights must be K positive numbers".into()));
            }
            let total: f64 = w.iter().sum();
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

/// Draws ground-truth parameters and an `m`-point sample.
pub fn generate_mixture(spec: &SimSpec) -> Result<SimulatedMixture> {
    let weights = validate(spec)?;
    let (d, k) = (spec.d, spec.k);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spectrum = DVector::from_vec(eccentric_spectrum(d, spec.e));
    let mut covs = Vec::with_capacity(k);
    let mut factors = Vec::with_capacity(k);
    for _ in 0..k {
        let q = random_orthogonal(d, &mut rng);
        let cov = q.transpose() * DMatrix::from_diagonal(&spectrum) * &q;
        factors.push(q.transpose() * DMatrix::from_diagonal(&spectrum.map(f64::sqrt)));
        covs.push(SpdMatrix::new(cov)?);
    }
    let trace = spectrum.sum();
    let required = SEPARATION_SLACK * spec.c * trace;

    let mut means = None;
    for _ in 0..MAX_RETRIES {
        let raw: Vec<DVector<f64>> =
            (0..k).map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
        let mut closest = f64::INFINITY;
        for i in 0..k {
            for j in i + 1..k {
                closest = closest.min((&raw[i] - &raw[j]).norm_squared());
            }
        }
        if k == 1 {
            means = Some(raw);
            break;
        }
        if closest > 1e-12 && closest.is_finite() {
            let scale = (required / closest).sqrt();
            means = Some(raw.into_iter().map(|v| v * scale).collect());
            break;
        }
    }
    let means = means.ok_or(Error::SeparationUnsatisfiable { retries: MAX_RETRIES })?;
    let truth = GmmParams::new(DVector::from_vec(weights.clone()), means, covs)?;
    if separation_margin(&truth, spec.c) < 0.0 {
        return Err(Error::SeparationUnsatisfiable { retries: MAX_RETRIES });
    }

    let picker = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut labels = Vec::with_capacity(spec.m);
    let mut points = DMatrix::zeros(spec.m, d);
    for i in 0..spec.m {
        let j = picker.sample(&mut rng);
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &truth.means()[j] + &factors[j] * z;
        points.row_mut(i).copy_from(&x.transpose());
        labels.push(j);
    }
    Ok(SimulatedMixture {
        truth,
        data: Dataset::new(points)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn spec(d: usize, k: usize, c: f64, e: f64) -> SimSpec {
        SimSpec {
            d,
            k,
            m: 200,
            c,
            e,
            weights: WeightSpec::Uniform,
            seed: 7,
        }
    }

    #[test]
    fn unit_eccentricity_is_spherical() {
        let sim = generate_mixture(&spec(4, 2, 1.0, 1.0)).unwrap();
        for cov in sim.truth.covariances() {
            assert!((cov.matrix() - DMatrix::identity(4, 4)).amax() < 1e-12);
        }
    }

    #[test]
    fn eccentricity_and_separation_hold() {
        for (d, k, c, e) in [(2, 3, 1.0, 10.0), (5, 5, 0.2, 1.0), (3, 4, 5.0, 3.0)] {
            let sim = generate_mixture(&spec(d, k, c, e)).unwrap();
            assert!(separation_margin(&sim.truth, c) >= 0.0);
            for cov in sim.truth.covariances() {
                let ev = SymmetricEigen::new(cov.matrix().clone()).eigenvalues;
                assert!(((ev.max() / ev.min()).sqrt() - e).abs() < 1e-9 * e);
            }
        }
    }

    #[test]
    fn single_component() {
        let sim = generate_mixture(&spec(2, 1, 1.0, 2.0)).unwrap();
        assert_eq!(sim.truth.n_components(), 1);
        assert!(sim.labels.iter().all(|&l| l == 0));
        assert_eq!(separation_margin(&sim.truth, 1.0), f64::INFINITY);
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_mixture(&spec(3, 3, 1.0, 2.0)).unwrap();
        let b = generate_mixture(&spec(3, 3, 1.0, 2.0)).unwrap();
        assert_eq!(a.data.points(), b.data.points());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn orthogonal_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(5, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_mixture(&spec(2, 2, 0.0, 1.0)).is_err());
        assert!(generate_mixture(&spec(2, 2, 1.0, 0.5)).is_err());
    }
}
