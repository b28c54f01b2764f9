//! Riemannian Newton trust-region method.
//!
//! The outer loop is generic over a [`TrustRegionProblem`] that minimizes a
//! cost; [`fit_rntr`] wraps the GMM objective by negating it.

mod gmm;
pub mod lbfgs;
pub mod space;
pub mod tcg;

use serde::{Deserialize, Serialize};

pub use gmm::{fit_rntr, GmmProblem};
pub use lbfgs::LbfgsPreconditioner;
pub use space::LinearSpace;
pub use tcg::{cauchy_point, truncated_cg, TcgConfig, TcgOutcome};

use crate::error::{Error, Result};
use crate::report::{Termination, TrStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrConfig {
    /// `None` picks the radius from the model along the gradient.
    pub delta0: Option<f64>,
    /// `None` means ten times the initial radius.
    pub delta_max: Option<f64>,
    pub rho_prime: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Tolerance on the change of the cost divided by the objective scale.
    pub all_diff_tol: f64,
    pub tcg: TcgConfig,
}

impl Default for TrConfig {
    fn default() -> Self {
        Self {
            delta0: None,
            delta_max: None,
            rho_prime: 0.1,
            omega1: 0.25,
            omega2: 0.75,
            tau1: 0.25,
            tau2: 2.0,
            max_iters: 1500,
            grad_tol: 1e-8,
            all_diff_tol: 1e-10,
            tcg: TcgConfig::default(),
        }
    }
}

impl TrConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.rho_prime > 0.0 && self.rho_prime < 0.25) {
            return bad("rho_prime must lie in (0, 1/4)");
        }
        if !(0.0 <= self.omega1 && self.omega1 <= self.omega2 && self.omega2 <= 1.0) {
            return bad("need 0 <= omega1 <= omega2 <= 1");
        }
        if !(self.tau1 > 0.0 && self.tau1 <= 0.25) {
            return bad("tau1 must lie in (0, 1/4]");
        }
        if !(self.tau2 > 1.0) {
            return bad("tau2 must exceed 1");
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0 && d.is_finite()) {
                return bad("delta0 must be positive");
            }
        }
        if let Some(d) = self.delta_max {
            if !(d > 0.0 && d.is_finite()) {
                return bad("delta_max must be positive");
            }
        }
        if self.grad_tol < 0.0 || self.all_diff_tol < 0.0 {
            return bad("tolerances must be nonnegative");
        }
        self.tcg.validate()
    }
}

/// A smooth cost on a manifold with a Hessian operator.
pub trait TrustRegionProblem {
    type Point: Clone;
    type Vector: LinearSpace;
    type Workspace;

    /// Cost, Riemannian gradient and the cache for Hessian products.
    fn prepare(&self, x: &Self::Point) -> Result<(f64, Self::Vector, Self::Workspace)>;
    fn cost(&self, x: &Self::Point) -> Result<f64>;
    fn hess_vec(&self, x: &Self::Point, ws: &Self::Workspace, v: &Self::Vector) -> Self::Vector;
    fn inner(&self, x: &Self::Point, a: &Self::Vector, b: &Self::Vector) -> f64;
    fn retract(&self, x: &Self::Point, v: &Self::Vector) -> Result<Self::Point>;
    fn dimension(&self, x: &Self::Point) -> usize;

    /// Divisor applied to cost differences in the termination test.
    fn objective_scale(&self) -> f64 {
        1.0
    }

    /// Problem-specific quantities recorded with each iterate.
    fn monitor(&self, _x: &Self::Point) -> (f64, f64) {
        (f64::NAN, f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct TrRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: Option<TrStep>,
    pub monitor: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct TrOutcome<P> {
    pub point: P,
    pub cost: f64,
    pub grad_norm: f64,
    pub records: Vec<TrRecord>,
    pub iterations: usize,
    pub accepted: usize,
    pub termination: Termination,
    pub initial_radius: f64,
    pub radius_cap: f64,
}

/// `||g||^3 / <H g, g>` (or `||g||` without positive curvature), clipped
/// to `[1e-4, delta_max]`.
pub fn initial_radius<V, I, H>(inner: I, grad: &V, mut hess: H, delta_max: Option<f64>) -> Result<f64>
where
    I: Fn(&V, &V) -> f64,
    H: FnMut(&V) -> V,
{
    let gn = inner(grad, grad).max(0.0).sqrt();
    if gn == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let hg = hess(grad);
    let curvature = inner(&hg, grad);
    let raw = if curvature > 0.0 { gn.powi(3) / curvature } else { gn };
    let lo = 1e-4;
    Ok(match delta_max {
        Some(cap) => raw.max(lo).min(cap),
        None => raw.max(lo),
    })
}

const RADIUS_FLOOR: f64 = 1e-16;

/// Minimizes the problem's cost from `x0`.
pub fn minimize<P: TrustRegionProblem>(problem: &P, x0: P::Point, cfg: &TrConfig) -> Result<TrOutcome<P::Point>> {
    cfg.validate()?;
    let mut x = x0;
    let (mut f, mut g, mut ws) = problem.prepare(&x)?;
    let mut gn = problem.inner(&x, &g, &g).max(0.0).sqrt();
    let mut records = Vec::new();
    let mut iterations = 0;
    let mut accepted = 0;

    let (mut delta, delta_max) = if gn == 0.0 {
        (1.0, 1.0)
    } else {
        let d0 = match cfg.delta0 {
            Some(d) => d,
            None => initial_radius(
                |a, b| problem.inner(&x, a, b),
                &g,
                |v| problem.hess_vec(&x, &ws, v),
                cfg.delta_max,
            )?,
        };
        let cap = cfg.delta_max.unwrap_or(10.0 * d0);
        (d0.min(cap), cap)
    };
    let initial = delta;
    let mut prec = LbfgsPreconditioner::new(cfg.tcg.lbfgs_memory);

    let termination = loop {
        if gn <= cfg.grad_tol || gn == 0.0 {
            break Termination::GradientNorm;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIterations;
        }
        if delta < RADIUS_FLOOR {
            break Termination::RadiusCollapse;
        }
        iterations += 1;

        let inner = |a: &P::Vector, b: &P::Vector| problem.inner(&x, a, b);
        let hess = |v: &P::Vector| problem.hess_vec(&x, &ws, v);
        let max_inner = cfg.tcg.max_inner.unwrap_or_else(|| problem.dimension(&x));
        let apply = |v: &P::Vector| prec.apply(inner, v);
        let use_prec = cfg.tcg.precondition && !prec.is_empty();
        let out = truncated_cg(
            inner,
            &g,
            hess,
            if use_prec { Some(&apply as &dyn Fn(&P::Vector) -> P::Vector) } else { None },
            delta,
            max_inner,
            &cfg.tcg,
        );

        let hg = hess(&g);
        let (t_cauchy, cauchy_decrease) = cauchy_point(gn, inner(&hg, &g), delta);
        let fallback = !(out.model_decrease >= cauchy_decrease * (1.0 - 1e-10));
        let (step, predicted, step_norm) = if fallback {
            (g.scaled(-t_cauchy), cauchy_decrease, t_cauchy * gn)
        } else {
            (out.step.clone(), out.model_decrease, out.step_norm)
        };
        if cfg.tcg.precondition && !out.pairs.is_empty() {
            prec.replace(out.pairs);
        }

        let candidate = problem
            .retract(&x, &step)
            .and_then(|c| problem.cost(&c).map(|fc| (c, fc)))
            .ok()
            .filter(|(_, fc)| fc.is_finite());
        let rho = match &candidate {
            None => 0.0,
            Some((_, fc)) => {
                let actual = f - fc;
                if predicted < 1e-14 * f.abs() {
                    if actual >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    actual / predicted
                }
            }
        };
        let accept = candidate.is_some() && rho > cfg.rho_prime;
        records.push(TrRecord {
            iter: iterations - 1,
            cost: f,
            grad_norm: gn,
            step: Some(TrStep {
                delta,
                rho,
                step_norm,
                accepted: accept,
                tcg_iterations: out.iterations,
                tcg_stop: out.stop,
                cauchy_fallback: fallback,
                model_decrease: predicted,
            }),
            monitor: problem.monitor(&x),
        });

        let at_boundary = step_norm >= (1.0 - 1e-8) * delta;
        if rho < cfg.omega1 {
            delta *= cfg.tau1;
        } else if rho > cfg.omega2 && at_boundary {
            delta = (cfg.tau2 * delta).min(delta_max);
        }

        if accept {
            let (next, f_next) = candidate.expect("accepted steps have a candidate");
            x = next;
            let (fp, gp, wp) = problem.prepare(&x)?;
            debug_assert!((fp - f_next).abs() <= 1e-8 * fp.abs().max(1.0));
            let diff = (f - fp).abs() / problem.objective_scale();
            f = fp;
            g = gp;
            ws = wp;
            gn = problem.inner(&x, &g, &g).max(0.0).sqrt();
            accepted += 1;
            if diff < cfg.all_diff_tol {
                break Termination::AllDifference;
            }
        } else if !cfg.tcg.reuse_after_reject {
            prec.clear();
        }
    };

    records.push(TrRecord {
        iter: iterations,
        cost: f,
        grad_norm: gn,
        step: None,
        monitor: problem.monitor(&x),
    });
    Ok(TrOutcome {
        point: x,
        cost: f,
        grad_norm: gn,
        records,
        iterations,
        accepted,
        termination,
        initial_radius: initial,
        radius_cap: delta_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// `f(x) = 1/2 x^T A x + b^T x` on R^n.
    struct Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl TrustRegionProblem for Quadratic {
        type Point = DVector<f64>;
        type Vector = DVector<f64>;
        type Workspace = ();

        fn prepare(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, ())> {
            Ok((self.cost(x)?, &self.a * x + &self.b, ()))
        }

        fn cost(&self, x: &DVector<f64>) -> Result<f64> {
            Ok(0.5 * x.dot(&(&self.a * x)) + self.b.dot(x))
        }

        fn hess_vec(&self, _x: &DVector<f64>, _ws: &(), v: &DVector<f64>) -> DVector<f64> {
            &self.a * v
        }

        fn inner(&self, _x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
            a.dot(b)
        }

        fn retract(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(x + v)
        }

        fn dimension(&self, x: &DVector<f64>) -> usize {
            x.len()
        }
    }

    fn quadratic() -> Quadratic {
        Quadratic {
            a: DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 1.0]),
            b: DVector::from_row_slice(&[1.0, -2.0, 0.5]),
        }
    }

    #[test]
    fn ratio_is_one_on_quadratic_model() {
        let q = quadratic();
        let out = minimize(&q, DVector::from_row_slice(&[4.0, 4.0, -4.0]), &TrConfig::default()).unwrap();
        for r in &out.records {
            if let Some(s) = &r.step {
                if s.model_decrease > 1e-10 {
                    assert!((s.rho - 1.0).abs() < 1e-8, "rho = {}", s.rho);
                }
            }
        }
        let xstar = q.a.clone().lu().solve(&(-&q.b)).unwrap();
        assert!((out.point - xstar).norm() < 1e-8);
    }

    #[test]
    fn converged_start_takes_no_steps() {
        let q = quadratic();
        let xstar = q.a.clone().lu().solve(&(-&q.b)).unwrap();
        let out = minimize(&q, xstar, &TrConfig::default()).unwrap();
        assert_eq!(out.accepted, 0);
        assert_eq!(out.termination, Termination::GradientNorm);
    }

    #[test]
    fn radius_stays_in_bounds() {
        let q = quadratic();
        let cfg = TrConfig {
            delta0: Some(0.01),
            delta_max: Some(0.05),
            ..TrConfig::default()
        };
        let out = minimize(&q, DVector::from_row_slice(&[40.0, -40.0, 40.0]), &cfg).unwrap();
        for s in out.records.iter().filter_map(|r| r.step.as_ref()) {
            assert!(s.delta > 0.0 && s.delta <= 0.05);
            assert!(s.step_norm <= s.delta + 1e-10);
        }
    }

    #[test]
    fn initial_radius_cases() {
        let dot = |a: &DVector<f64>, b: &DVector<f64>| a.dot(b);
        let g = DVector::from_row_slice(&[3.0, 4.0]);
        assert!((initial_radius(dot, &g, |v| v.clone(), None).unwrap() - 5.0).abs() < 1e-14);
        assert!((initial_radius(dot, &g, |v| -v, None).unwrap() - 5.0).abs() < 1e-14);
        let tiny = DVector::from_row_slice(&[1e-10, 0.0]);
        assert_eq!(initial_radius(dot, &tiny, |v| v.clone(), None).unwrap(), 1e-4);
        assert_eq!(initial_radius(dot, &g, |v| v.clone(), Some(2.0)).unwrap(), 2.0);
        let zero = DVector::zeros(2);
        assert_eq!(initial_radius(dot, &zero, |v| v.clone(), None).unwrap_err(), Error::ZeroGradient);
    }

    #[test]
    fn config_validation() {
        assert!(TrConfig::default().validate().is_ok());
        let bad = TrConfig {
            rho_prime: 0.3,
            ..TrConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrConfig {
            tau2: 1.0,
            ..TrConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
