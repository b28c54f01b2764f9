use nalgebra::DVector;

use crate::spd::TangentVector;

/// Vector-space operations needed by the inner solver. Inner products are
/// supplied separately because they depend on the base point.
pub trait LinearSpace: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a * x`.
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale_mut(&mut self, a: f64);

    fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }
}

impl LinearSpace for TangentVector {
    fn zeros_like(&self) -> Self {
        self.scaled(0.0)
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        TangentVector::axpy(self, a, x)
    }

    fn scale_mut(&mut self, a: f64) {
        TangentVector::scale_mut(self, a)
    }
}

impl LinearSpace for DVector<f64> {
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        nalgebra::Matrix::axpy(self, a, x, 1.0)
    }

    fn scale_mut(&mut self, a: f64) {
        nalgebra::Matrix::scale_mut(self, a)
    }
}
