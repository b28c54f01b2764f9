//! Steihaug truncated conjugate gradient for the trust-region subproblem
//! `min <g, s> + 1/2 <H s, s>` subject to `||s|| <= delta`.

use serde::{Deserialize, Serialize};

use super::space::LinearSpace;
use crate::report::TcgStop;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcgConfig {
    /// Exponent `delta` in the residual test `||r|| <= ||r0|| min(||r0||^delta, kappa)`.
    pub delta_exponent: f64,
    pub kappa: f64,
    /// `None` means the tangent-space dimension.
    pub max_inner: Option<usize>,
    pub precondition: bool,
    pub lbfgs_memory: usize,
    /// Keep curvature pairs after a rejected step.
    pub reuse_after_reject: bool,
}

impl Default for TcgConfig {
    fn default() -> Self {
        Self {
            delta_exponent: 0.9,
            kappa: 0.1,
            max_inner: None,
            precondition: true,
            lbfgs_memory: 10,
            reuse_after_reject: true,
        }
    }
}

impl TcgConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.delta_exponent > 0.0 && self.delta_exponent <= 1.0) {
            return Err(crate::Error::InvalidConfig("tCG exponent must lie in (0, 1]".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(crate::Error::InvalidConfig("tCG kappa must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TcgOutcome<V> {
    pub step: V,
    /// `H[step]`, accumulated without extra operator calls.
    pub hess_step: V,
    pub stop: TcgStop,
    pub iterations: usize,
    /// `m(0) - m(step)`.
    pub model_decrease: f64,
    pub step_norm: f64,
    /// `(alpha d, alpha H d)` for each full CG step.
    pub pairs: Vec<(V, V)>,
}

fn boundary_tau(ee: f64, ed: f64, dd: f64, delta: f64) -> f64 {
    let disc = (ed * ed + dd * (delta * delta - ee)).max(0.0);
    (-ed + disc.sqrt()) / dd
}

/// Solves the subproblem approximately. `precond` maps a residual to a
/// preconditioned residual; pass `None` for plain CG.
pub fn truncated_cg<V, I, H>(
    inner: I,
    grad: &V,
    mut hess: H,
    precond: Option<&dyn Fn(&V) -> V>,
    delta: f64,
    max_inner: usize,
    cfg: &TcgConfig,
) -> TcgOutcome<V>
where
    V: LinearSpace,
    I: Fn(&V, &V) -> f64,
    H: FnMut(&V) -> V,
{
    let mut eta = grad.zeros_like();
    let mut heta = grad.zeros_like();
    let mut r = grad.clone();
    let apply_p = |v: &V| match precond {
        Some(p) => p(v),
        None => v.clone(),
    };
    let mut z = apply_p(&r);
    let mut zr = inner(&z, &r);
    let mut d = z.scaled(-1.0);
    let r0 = inner(&r, &r).sqrt();
    let threshold = r0 * r0.powf(cfg.delta_exponent).min(cfg.kappa);
    let mut ee = 0.0;
    let mut ed = 0.0;
    let mut dd = inner(&d, &d);
    let mut pairs = Vec::new();
    let mut stop = TcgStop::MaxInner;
    let mut iterations = 0;

    for _ in 0..max_inner.max(1) {
        iterations += 1;
        let hd = hess(&d);
        let dhd = inner(&d, &hd);
        if !(dhd > 0.0) {
            let tau = boundary_tau(ee, ed, dd, delta);
            eta.axpy(tau, &d);
            heta.axpy(tau, &hd);
            stop = TcgStop::NegativeCurvature;
            break;
        }
        let alpha = zr / dhd;
        let ee_new = ee + 2.0 * alpha * ed + alpha * alpha * dd;
        if ee_new >= delta * delta {
            let tau = boundary_tau(ee, ed, dd, delta);
            eta.axpy(tau, &d);
            heta.axpy(tau, &hd);
            stop = TcgStop::Boundary;
            break;
        }
        eta.axpy(alpha, &d);
        heta.axpy(alpha, &hd);
        r.axpy(alpha, &hd);
        pairs.push((d.scaled(alpha), hd.scaled(alpha)));
        if inner(&r, &r).sqrt() <= threshold {
            stop = TcgStop::Residual;
            break;
        }
        z = apply_p(&r);
        let zr_new = inner(&z, &r);
        let beta = zr_new / zr;
        zr = zr_new;
        d.scale_mut(beta);
        d.axpy(-1.0, &z);
        ee = inner(&eta, &eta);
        ed = inner(&eta, &d);
        dd = inner(&d, &d);
    }

    let model_decrease = -(inner(grad, &eta) + 0.5 * inner(&heta, &eta));
    let step_norm = inner(&eta, &eta).max(0.0).sqrt();
    TcgOutcome {
        step: eta,
        hess_step: heta,
        stop,
        iterations,
        model_decrease,
        step_norm,
        pairs,
    }
}

/// Cauchy point: model minimizer along `-g` inside the radius. Returns the
/// step length `t` (step is `-t g`) and the model decrease.
pub fn cauchy_point(grad_norm: f64, curvature: f64, delta: f64) -> (f64, f64) {
    let g2 = grad_norm * grad_norm;
    let t_bound = delta / grad_norm;
    let t = if curvature > 0.0 { (g2 / curvature).min(t_bound) } else { t_bound };
    (t, t * g2 - 0.5 * t * t * curvature)
}
