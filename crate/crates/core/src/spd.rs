//! Dense symmetric / SPD linear algebra and the geometry of the product
//! manifold `(P^{n})^K x R^{K-1}` under the affine-invariant metric.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};


fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidParams("empty matrix".into()));
    }
    Ok(m.nrows())
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Largest asymmetry relative to the largest entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Lower-triangular Cholesky factor `L` with `L L^T = m`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot is not strictly
/// positive, i.e. when `m` lies on or outside the boundary of the SPD cone.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cholesky input"));
    }
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// Symmetric matrix; a tangent vector of the SPD cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes the input. Inputs whose asymmetry exceeds round-off are
    /// still accepted; only non-square input is rejected.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        Ok(Self(symmetrize(&m)))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Mutable access for in-place linear combinations. Callers must keep
    /// the matrix symmetric.
    pub(crate) fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        debug_assert!(relative_asymmetry(&m) <= 1e-9);
        Self(m)
    }
}

/// Symmetric positive-definite matrix with its Cholesky factor.
///
/// The factor is computed on construction and doubles as the definiteness
/// witness. Derived quantities (inverse, square roots) are cached lazily.
#[derive(Debug)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
    inverse: OnceLock<DMatrix<f64>>,
    chol_inverse: OnceLock<DMatrix<f64>>,
    sqrt_pair: OnceLock<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Clone for SpdMatrix {
    fn clone(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            chol: self.chol.clone(),
            inverse: self.inverse.clone(),
            chol_inverse: self.chol_inverse.clone(),
            sqrt_pair: self.sqrt_pair.clone(),
        }
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let entries = symmetrize(&m);
        let chol = cholesky(&entries)?;
        Ok(Self {
            entries,
            chol,
            inverse: OnceLock::new(),
            chol_inverse: OnceLock::new(),
            sqrt_pair: OnceLock::new(),
        })
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower Cholesky factor.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `S^{-1} b` through the Cholesky factor.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .chol
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.chol
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        self.inverse.get_or_init(|| {
            let n = self.dim();
            symmetrize(&self.solve(&DMatrix::identity(n, n)))
        })
    }

    /// `L^{-1}`.
    pub fn chol_inverse(&self) -> &DMatrix<f64> {
        self.chol_inverse.get_or_init(|| {
            let n = self.dim();
            self.chol
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .expect("cholesky factor has a positive diagonal")
        })
    }

    /// `(S^{1/2}, S^{-1/2})` from the symmetric eigendecomposition.
    pub fn sqrt_pair(&self) -> &(DMatrix<f64>, DMatrix<f64>) {
        self.sqrt_pair.get_or_init(|| {
            let eig = SymmetricEigen::new(self.entries.clone());
            let root = spectral_map(&eig, |v| v.max(0.0).sqrt());
            let inv_root = spectral_map(&eig, |v| 1.0 / v.sqrt());
            (root, inv_root)
        })
    }

    /// `L^{-1} X L^{-T}`: the whitened representative of a tangent vector,
    /// whose Frobenius inner products realize the affine-invariant metric.
    pub fn whiten(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let li = self.chol_inverse();
        li * x * li.transpose()
    }
}

fn spectral_map(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let v = f(*lambda);
        scaled.column_mut(j).scale_mut(v);
    }
    symmetrize(&(scaled * q.transpose()))
}

/// `log det m = 2 sum log diag(chol)`.
pub fn log_det(m: &SpdMatrix) -> f64 {
    m.log_det()
}

/// `m^{-1} b`.
pub fn spd_solve(m: &SpdMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: b.nrows(),
        });
    }
    Ok(m.solve(b))
}

/// Matrix exponential of a symmetric matrix via its eigendecomposition.
///
/// Only fails if the exponential overflows.
pub fn sym_expm(m: &SymMatrix) -> Result<SpdMatrix> {
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let out = spectral_map(&eig, f64::exp);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential"));
    }
    SpdMatrix::new(out)
}

/// Principal matrix logarithm of an SPD matrix.
pub fn spd_logm(m: &SpdMatrix) -> SymMatrix {
    let eig = SymmetricEigen::new(m.matrix().clone());
    SymMatrix::from_symmetric_unchecked(spectral_map(&eig, f64::ln))
}

/// Affine-invariant distance `||log(A^{-1/2} B A^{-1/2})||_F`.
pub fn spd_geodesic_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    // L^{-1} B L^{-T} is similar to A^{-1/2} B A^{-1/2}.
    let c = symmetrize(&a.whiten(b.matrix()));
    let eig = SymmetricEigen::new(c);
    let sq: f64 = eig
        .eigenvalues
        .iter()
        .map(|v| {
            let l = v.max(f64::MIN_POSITIVE).ln();
            l * l
        })
        .sum();
    Ok(sq.sqrt())
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// A point `((S_1..S_K), eta)` of the product manifold. `eta` holds the
/// first `K - 1` log-weight coordinates; the last one is pinned to zero.
#[derive(Debug, Clone)]
pub struct ThetaPoint {
    s_blocks: Vec<SpdMatrix>,
    eta: DVector<f64>,
    generation: u64,
}

impl PartialEq for ThetaPoint {
    fn eq(&self, other: &Self) -> bool {
        self.s_blocks == other.s_blocks && self.eta == other.eta
    }
}

impl ThetaPoint {
    pub fn new(s_blocks: Vec<SpdMatrix>, eta: DVector<f64>) -> Result<Self> {
        let k = s_blocks.len();
        if k == 0 {
            return Err(Error::InvalidParams("at least one component required".into()));
        }
        if eta.len() != k - 1 {
            return Err(Error::DimensionMismatch {
                expected: k - 1,
                got: eta.len(),
            });
        }
        let n = s_blocks[0].dim();
        if let Some(bad) = s_blocks.iter().find(|s| s.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.dim(),
            });
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eta"));
        }
        Ok(Self {
            s_blocks,
            eta,
            generation: next_generation(),
        })
    }

    pub fn s_blocks(&self) -> &[SpdMatrix] {
        &self.s_blocks
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    /// Number of mixture components `K`.
    pub fn n_components(&self) -> usize {
        self.s_blocks.len()
    }

    /// Dimension `d + 1` of each block.
    pub fn block_dim(&self) -> usize {
        self.s_blocks[0].dim()
    }

    /// Identity used to pair cached workspaces with the point they were
    /// built for.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// `eta` extended with the implicit trailing zero.
    pub fn full_eta(&self) -> DVector<f64> {
        let k = self.n_components();
        DVector::from_fn(k, |j, _| if j + 1 < k { self.eta[j] } else { 0.0 })
    }

    /// Mixing weights `softmax(eta, 0)`.
    pub fn weights(&self) -> DVector<f64> {
        softmax(&self.full_eta())
    }

    /// Dimension of the tangent space.
    pub fn tangent_dim(&self) -> usize {
        let n = self.block_dim();
        self.n_components() * n * (n + 1) / 2 + self.eta.len()
    }

    pub fn zero_tangent(&self) -> TangentVector {
        TangentVector {
            s_blocks: vec![SymMatrix::zeros(self.block_dim()); self.n_components()],
            eta: DVector::zeros(self.eta.len()),
        }
    }

    fn check_tangent(&self, xi: &TangentVector) -> Result<()> {
        if xi.s_blocks.len() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                got: xi.s_blocks.len(),
            });
        }
        if xi.eta.len() != self.eta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.eta.len(),
                got: xi.eta.len(),
            });
        }
        if let Some(b) = xi.s_blocks.iter().find(|b| b.dim() != self.block_dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.block_dim(),
                got: b.dim(),
            });
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(v: &DVector<f64>) -> DVector<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = v.map(|x| (x - max).exp());
    let s = out.sum();
    out /= s;
    out
}

/// `log sum exp(v)`.
pub fn log_sum_exp(v: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Tangent vector `((xi_{S_1}..xi_{S_K}), xi_eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub s_blocks: Vec<SymMatrix>,
    pub eta: DVector<f64>,
}

impl TangentVector {
    pub fn new(s_blocks: Vec<SymMatrix>, eta: DVector<f64>) -> Self {
        Self { s_blocks, eta }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }

    pub fn scale_mut(&mut self, a: f64) {
        for b in &mut self.s_blocks {
            b.as_matrix_mut().scale_mut(a);
        }
        self.eta.scale_mut(a);
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &TangentVector) {
        for (b, xb) in self.s_blocks.iter_mut().zip(&x.s_blocks) {
            *b.as_matrix_mut() += xb.as_matrix() * a;
        }
        self.eta.axpy(a, &x.eta, 1.0);
    }

    /// Flattens to the upper triangles (row-major) followed by `eta`.
    pub fn to_coords(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in &self.s_blocks {
            let m = b.as_matrix();
            for i in 0..m.nrows() {
                for j in i..m.ncols() {
                    out.push(m[(i, j)]);
                }
            }
        }
        out.extend(self.eta.iter());
        out
    }

    /// Inverse of [`TangentVector::to_coords`].
    pub fn from_coords(k: usize, n: usize, coords: &[f64]) -> Result<Self> {
        let per = n * (n + 1) / 2;
        let expected = k * per + k.saturating_sub(1);
        if coords.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coords.len(),
            });
        }
        let mut it = coords.iter();
        let mut blocks = Vec::with_capacity(k);
        for _ in 0..k {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = *it.next().unwrap();
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            blocks.push(SymMatrix(m));
        }
        let eta = DVector::from_iterator(k.saturating_sub(1), it.cloned());
        Ok(Self::new(blocks, eta))
    }
}

/// `sum_j tr(S_j^{-1} xi_j S_j^{-1} chi_j) + xi_eta . chi_eta`.
///
/// Evaluated as Frobenius products of whitened blocks, so the result is
/// bitwise symmetric in `(xi, chi)`.
pub fn inner_product(theta: &ThetaPoint, xi: &TangentVector, chi: &TangentVector) -> Result<f64> {
    theta.check_tangent(xi)?;
    theta.check_tangent(chi)?;
    Ok(inner_product_unchecked(theta, xi, chi))
}

pub(crate) fn inner_product_unchecked(
    theta: &ThetaPoint,
    xi: &TangentVector,
    chi: &TangentVector,
) -> f64 {
    let mut total = 0.0;
    for ((s, a), b) in theta.s_blocks.iter().zip(&xi.s_blocks).zip(&chi.s_blocks) {
        if std::ptr::eq(a, b) {
            let wa = s.whiten(a.as_matrix());
            total += wa.component_mul(&wa).sum();
        } else {
            let wa = s.whiten(a.as_matrix());
            let wb = s.whiten(b.as_matrix());
            total += wa.component_mul(&wb).sum();
        }
    }
    total + xi.eta.dot(&chi.eta)
}

/// Exponential-map retraction: `S_j exp(S_j^{-1} xi_j)` per block,
/// `eta + xi_eta` on the Euclidean factor.
///
/// Blocks are evaluated as `S^{1/2} exp(S^{-1/2} xi S^{-1/2}) S^{1/2}`,
/// which is symmetric by construction. The result is SPD for any
/// symmetric `xi`; only overflow of the exponential can fail.
pub fn retract(theta: &ThetaPoint, xi: &TangentVector) -> Result<ThetaPoint> {
    theta.check_tangent(xi)?;
    let mut blocks = Vec::with_capacity(theta.n_components());
    for (s, x) in theta.s_blocks.iter().zip(&xi.s_blocks) {
        let (root, inv_root) = s.sqrt_pair();
        let inner = SymMatrix::new(inv_root * x.as_matrix() * inv_root)?;
        let e = sym_expm(&inner)?;
        blocks.push(SpdMatrix::new(root * e.matrix() * root)?);
    }
    ThetaPoint::new(blocks, &theta.eta + &xi.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut impl Rng, n: usize) -> SpdMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
    }

    fn random_sym(rng: &mut impl Rng, n: usize, scale: f64) -> SymMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
        SymMatrix::new(a).unwrap()
    }

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));

        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert_relative_eq!(l, expected, epsilon = 1e-15);
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-14);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&bad), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(SpdMatrix::identity(4).log_det(), 0.0);
        let d = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert_relative_eq!(log_det(&d), 6f64.ln(), epsilon = 1e-14);
        let c = SpdMatrix::new(DMatrix::identity(5, 5) * 3.5).unwrap();
        assert_relative_eq!(c.log_det(), 5.0 * 3.5f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn solve_examples() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(spd_solve(&SpdMatrix::identity(2), &b).unwrap(), b);

        let d = SpdMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let inv = spd_solve(&d, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(inv, DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, 0.25])));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_spd(&mut rng, 6);
        let b = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let x = spd_solve(&m, &b).unwrap();
        let resid = (m.matrix() * x - &b).norm() / b.norm();
        assert!(resid <= 1e-10, "residual {resid}");

        assert!(spd_solve(&m, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn expm_examples() {
        assert_relative_eq!(
            sym_expm(&SymMatrix::zeros(3)).unwrap().matrix(),
            &DMatrix::identity(3, 3),
            epsilon = 1e-15
        );
        let e = sym_expm(&SymMatrix::identity(2)).unwrap();
        assert_relative_eq!(e.matrix(), &(DMatrix::identity(2, 2) * std::f64::consts::E), epsilon = 1e-14);
        let l = sym_expm(&SymMatrix::from_diagonal(&[2f64.ln(), 3f64.ln()])).unwrap();
        assert_relative_eq!(l.matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(l.matrix()[(1, 1)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(l.matrix()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = ThetaPoint::new(
            vec![SpdMatrix::identity(n), SpdMatrix::identity(n)],
            DVector::from_row_slice(&[0.3]),
        )
        .unwrap();
        let xi = TangentVector::new(
            vec![random_sym(&mut rng, n, 1.0), random_sym(&mut rng, n, 1.0)],
            DVector::from_row_slice(&[0.7]),
        );
        let chi = TangentVector::new(
            vec![random_sym(&mut rng, n, 1.0), random_sym(&mut rng, n, 1.0)],
            DVector::from_row_slice(&[-1.1]),
        );
        let frob: f64 = xi
            .s_blocks
            .iter()
            .zip(&chi.s_blocks)
            .map(|(a, b)| (a.as_matrix() * b.as_matrix()).trace())
            .sum::<f64>()
            + 0.7 * -1.1;
        assert_relative_eq!(inner_product(&theta, &xi, &chi).unwrap(), frob, epsilon = 1e-13);
        assert!(inner_product(&theta, &xi, &xi).unwrap() > 0.0);

        let theta1 = ThetaPoint::new(vec![SpdMatrix::from_diagonal(&[2.0]).unwrap()], DVector::zeros(0)).unwrap();
        let v = TangentVector::new(vec![SymMatrix::from_diagonal(&[2.0])], DVector::zeros(0));
        assert_relative_eq!(inner_product(&theta1, &v, &v).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn retract_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta = ThetaPoint::new(
            vec![random_spd(&mut rng, 3), random_spd(&mut rng, 3)],
            DVector::from_row_slice(&[0.4]),
        )
        .unwrap();
        let same = retract(&theta, &theta.zero_tangent()).unwrap();
        for (a, b) in same.s_blocks().iter().zip(theta.s_blocks()) {
            assert_relative_eq!(a.matrix(), b.matrix(), epsilon = 1e-12);
        }

        let id = ThetaPoint::new(vec![SpdMatrix::identity(2)], DVector::zeros(0)).unwrap();
        let v = TangentVector::new(vec![SymMatrix::identity(2)], DVector::zeros(0));
        let r = retract(&id, &v).unwrap();
        assert_relative_eq!(r.s_blocks()[0].matrix(), &(DMatrix::identity(2, 2) * std::f64::consts::E), epsilon = 1e-13);

        // Rigidity: d/dt R(t xi) at 0 equals xi.
        let xi = TangentVector::new(
            vec![random_sym(&mut rng, 3, 1.0), random_sym(&mut rng, 3, 1.0)],
            DVector::from_row_slice(&[0.9]),
        );
        let h = 1e-6;
        let plus = retract(&theta, &xi.scaled(h)).unwrap();
        let minus = retract(&theta, &xi.scaled(-h)).unwrap();
        for j in 0..2 {
            let fd = (plus.s_blocks()[j].matrix() - minus.s_blocks()[j].matrix()) / (2.0 * h);
            let err = (&fd - xi.s_blocks[j].as_matrix()).norm() / xi.s_blocks[j].as_matrix().norm();
            assert!(err <= 1e-6, "rigidity error {err}");
        }
        assert_relative_eq!((plus.eta() - minus.eta())[0] / (2.0 * h), 0.9, epsilon = 1e-8);
    }

    #[test]
    fn geodesic_distance_examples() {
        let a = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[std::f64::consts::E.powi(2)]).unwrap();
        assert_relative_eq!(spd_geodesic_distance(&a, &b).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(spd_geodesic_distance(&a, &a).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_spd(&mut rng, 4);
        let q = random_spd(&mut rng, 4);
        let d1 = spd_geodesic_distance(&p, &q).unwrap();
        let d2 = spd_geodesic_distance(&q, &p).unwrap();
        assert!((d1 - d2).abs() <= 1e-10 * d1.max(1.0));
        assert!(spd_geodesic_distance(&p, &SpdMatrix::identity(3)).is_err());
    }

    #[test]
    fn construction_symmetrizes_and_rejects() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0 + 1e-14, 1.0, 2.0]);
        let s = SpdMatrix::new(m).unwrap();
        assert_eq!(s.matrix()[(0, 1)], s.matrix()[(1, 0)]);
        assert!(matches!(
            SpdMatrix::new(DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        assert!(ThetaPoint::new(vec![], DVector::zeros(0)).is_err());
        assert!(ThetaPoint::new(vec![SpdMatrix::identity(2)], DVector::zeros(1)).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = TangentVector::new(
            vec![random_sym(&mut rng, 3, 1.0), random_sym(&mut rng, 3, 1.0)],
            DVector::from_row_slice(&[0.2]),
        );
        let c = xi.to_coords();
        assert_eq!(c.len(), 13);
        assert_eq!(TangentVector::from_coords(2, 3, &c).unwrap(), xi);
    }
}
