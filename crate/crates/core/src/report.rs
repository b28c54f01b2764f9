//! Fit results shared by both solvers.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::GmmParams;
use crate::spd::ThetaPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Em,
    Rntr,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Em => "em",
            Solver::Rntr => "rntr",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Solver::Em),
            "rntr" | "rtr" => Ok(Solver::Rntr),
            other => Err(format!("unknown solver '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Average log-likelihood changed by less than the tolerance.
    AllDifference,
    GradientNorm,
    MaxIterations,
    /// Trust radius shrank below machine resolution.
    RadiusCollapse,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::AllDifference => "all_difference",
            Termination::GradientNorm => "gradient_norm",
            Termination::MaxIterations => "max_iterations",
            Termination::RadiusCollapse => "radius_collapse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcgStop {
    NegativeCurvature,
    Boundary,
    Residual,
    MaxInner,
}

impl TcgStop {
    pub fn name(self) -> &'static str {
        match self {
            TcgStop::NegativeCurvature => "negative_curvature",
            TcgStop::Boundary => "boundary",
            TcgStop::Residual => "residual",
            TcgStop::MaxInner => "max_inner",
        }
    }
}

/// Trust-region bookkeeping for one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrStep {
    pub delta: f64,
    pub rho: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub tcg_iterations: usize,
    pub tcg_stop: TcgStop,
    /// The Cauchy point replaced the inner solution.
    pub cauchy_fallback: bool,
    pub model_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Penalized objective at the iterate the step starts from.
    pub objective: f64,
    pub grad_norm: Option<f64>,
    pub step: Option<TrStep>,
    pub min_weight: f64,
    /// `max_j ||S_j|| / ||Psi||` (Frobenius norms).
    pub max_block_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub solver: Solver,
    pub theta: ThetaPoint,
    pub params: GmmParams,
    pub trace: Vec<IterRecord>,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Iterations that moved the point.
    pub accepted_iterations: usize,
    /// Final penalized objective.
    pub objective: f64,
    pub n_observations: usize,
    pub grad_norm: Option<f64>,
    pub wall_time: Duration,
    pub termination: Termination,
}

impl FitReport {
    /// Penalized average log-likelihood.
    pub fn average_log_likelihood(&self) -> f64 {
        self.objective / self.n_observations as f64
    }
}
