use std::time::Instant;

use crate::derivatives::{gradient_and_workspace, hessian_vector_product, HvpWorkspace};
use crate::error::{Error, Result};
use crate::model::{backward_transform, forward_transform, penalized_objective, Dataset, GmmParams, PenaltyConfig};
use crate::report::{FitReport, IterRecord, Solver};
use crate::spd::{inner_product_unchecked, retract, TangentVector, ThetaPoint};

use super::{minimize, TrConfig, TrustRegionProblem};

/// Minimizes `-L_pen` over the product manifold.
pub struct GmmProblem<'a> {
    pub data: &'a Dataset,
    pub penalty: &'a PenaltyConfig,
}

impl TrustRegionProblem for GmmProblem<'_> {
    type Point = ThetaPoint;
    type Vector = TangentVector;
    type Workspace = HvpWorkspace;

    fn prepare(&self, x: &ThetaPoint) -> Result<(f64, TangentVector, HvpWorkspace)> {
        let (g, ws) = gradient_and_workspace(x, self.data, self.penalty)?;
        Ok((-g.objective_value, g.grad.scaled(-1.0), ws))
    }

    fn cost(&self, x: &ThetaPoint) -> Result<f64> {
        Ok(-penalized_objective(x, self.data, self.penalty)?)
    }

    fn hess_vec(&self, x: &ThetaPoint, ws: &HvpWorkspace, v: &TangentVector) -> TangentVector {
        let mut h = hessian_vector_product(x, v, self.data, self.penalty, ws)
            .expect("workspace is rebuilt whenever the iterate changes");
        h.scale_mut(-1.0);
        h
    }

    fn inner(&self, x: &ThetaPoint, a: &TangentVector, b: &TangentVector) -> f64 {
        inner_product_unchecked(x, a, b)
    }

    fn retract(&self, x: &ThetaPoint, v: &TangentVector) -> Result<ThetaPoint> {
        retract(x, v)
    }

    fn dimension(&self, x: &ThetaPoint) -> usize {
        x.tangent_dim()
    }

    fn objective_scale(&self) -> f64 {
        self.data.len() as f64
    }

    fn monitor(&self, x: &ThetaPoint) -> (f64, f64) {
        let min_weight = x.weights().min();
        let psi = self.penalty.psi.matrix().norm();
        let max_block = x.s_blocks().iter().map(|s| s.matrix().norm()).fold(0.0, f64::max);
        (min_weight, max_block / psi)
    }
}

/// Riemannian Newton trust-region fit from `init`.
pub fn fit_rntr(data: &Dataset, init: &GmmParams, cfg: &TrConfig, penalty: &PenaltyConfig) -> Result<FitReport> {
    let start = Instant::now();
    if init.dim() != data.dim() {
        return Err(Error::Initialization(format!(
            "initial parameters have dimension {}, data has {}",
            init.dim(),
            data.dim()
        )));
    }
    let theta0 = forward_transform(init).map_err(|e| Error::Initialization(e.to_string()))?;
    let problem = GmmProblem { data, penalty };
    let out = minimize(&problem, theta0, cfg)?;
    let params = backward_transform(&out.point)?;
    let trace = out
        .records
        .iter()
        .map(|r| IterRecord {
            iter: r.iter,
            objective: -r.cost,
            grad_norm: Some(r.grad_norm),
            step: r.step.clone(),
            min_weight: r.monitor.0,
            max_block_ratio: r.monitor.1,
        })
        .collect();
    Ok(FitReport {
        solver: Solver::Rntr,
        theta: out.point,
        params,
        trace,
        iterations: out.iterations,
        accepted_iterations: out.accepted,
        objective: -out.cost,
        n_observations: data.len(),
        grad_norm: Some(out.grad_norm),
        wall_time: start.elapsed(),
        termination: out.termination,
    })
}
