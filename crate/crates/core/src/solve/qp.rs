//! Common QP types and the single-shot entry point.

use serde::{Deserialize, Serialize};

use super::active_set::ActiveSetSolver;
use super::admm::AdmmSolver;
use crate::encode::CscMatrix;

/// Which convex subsolver runs the QPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    /// Equality elimination followed by a dual active-set method. Exact up to rounding.
    ActiveSet,
    /// Operator splitting with ρ adaptation and optional polishing.
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub method: QpMethod,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iterations: usize,
    pub polish: bool,
    pub eps_pinf: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iterations: usize,
    pub adaptive_rho: bool,
    pub check_interval: usize,
    /// Curvature added to directions the Hessian leaves flat (active-set only).
    pub regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            method: QpMethod::ActiveSet,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iterations: 4000,
            polish: true,
            eps_pinf: 1e-7,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iterations: 10,
            adaptive_rho: true,
            check_interval: 5,
            regularization: 1e-9,
        }
    }
}

impl QpSettings {
    pub fn admm() -> Self {
        Self {
            method: QpMethod::Admm,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Primal point (the last iterate on failure).
    pub x: Vec<f64>,
    /// Constraint-row multipliers: negative on an active lower bound, positive on an upper one.
    pub y: Vec<f64>,
    /// Variable-bound multipliers, same sign convention.
    pub y_bounds: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub(crate) internal: Option<(Vec<f64>, Vec<f64>)>,
}

impl QpSolution {
    pub(crate) fn failed(status: QpStatus, n: usize, m: usize, iterations: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            y: vec![0.0; m],
            y_bounds: vec![0.0; n],
            objective: f64::NAN,
            iterations,
            polished: false,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            internal: None,
        }
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            internal: self.internal.clone(),
        }
    }
}

/// A point to resume from. The ADMM backend also keeps its slack and dual iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub(crate) internal: Option<(Vec<f64>, Vec<f64>)>,
}

/// A QP in solver form: `min ½x'Px + q'x  s.t.  lower <= Ax <= upper,
/// var_lower <= x <= var_upper`. Infinite bounds are allowed.
#[derive(Debug, Clone, Copy)]
pub struct QpData<'a> {
    pub hessian: &'a CscMatrix,
    pub linear: &'a [f64],
    pub constraints: &'a CscMatrix,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub var_lower: &'a [f64],
    pub var_upper: &'a [f64],
}

/// Solves a single QP from a cold start.
pub fn qp_solve(data: &QpData<'_>, settings: &QpSettings) -> QpSolution {
    match settings.method {
        QpMethod::ActiveSet => ActiveSetSolver::new(*settings).solve(data),
        QpMethod::Admm => {
            let bounded: Vec<usize> = (0..data.linear.len())
                .filter(|&k| data.var_lower[k].is_finite() || data.var_upper[k].is_finite())
                .collect();
            let mut solver = AdmmSolver::new(data.hessian, data.constraints, &bounded, *settings);
            solver.solve(data.linear, data.lower, data.upper, data.var_lower, data.var_upper, None)
        }
    }
}
