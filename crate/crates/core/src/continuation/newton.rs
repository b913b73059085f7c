use serde::{Deserialize, Serialize};

use super::{CostKind, CostLedger, CostWeights, RecordingLedger};
use crate::error::{Error, Result};
use crate::krylov::{pcg_solve, PcgConfig, PcgStatus};
use crate::linalg::Vector;
use crate::problem::{HessianOperator, Problem, RegularizationPreconditioner};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub grad_tol: f64,
    pub eps_cg: f64,
    pub max_iter: usize,
    pub pcg_max_iter: usize,
    pub max_backtracks: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub weights: CostWeights,
    pub record_path: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            eps_cg: 1e-2,
            max_iter: 200,
            pcg_max_iter: 500,
            max_backtracks: 40,
            armijo: 1e-4,
            weights: CostWeights::default(),
            record_path: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonResult {
    pub m: Vec<f64>,
    pub ledger: CostLedger,
    pub events: Vec<(CostKind, u64)>,
    pub iterations: usize,
    pub hessian_solves: usize,
    pub pcg_iterations: usize,
    pub converged: bool,
    pub grad_norms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<Vec<f64>>,
}

/// Line-search Newton-CG on `J(., theta)` from `m_init`, preconditioned by
/// `R^{-1}`. Stops at `|g| <= grad_tol`; running out of iterations is
/// reported through `converged`.
pub fn newton_reoptimize(
    problem: &dyn Problem,
    theta: &Vector,
    m_init: &Vector,
    cfg: &NewtonConfig,
) -> Result<NewtonResult> {
    m_init.check_dim(problem.dim())?;
    theta.check_dim(problem.theta_dim())?;
    let pcg = PcgConfig {
        eps_cg: cfg.eps_cg,
        max_iter: cfg.pcg_max_iter,
        record_pairs: false,
        record_cap: 0,
    };
    pcg.validate()?;
    let prec = RegularizationPreconditioner(problem.regularization());
    let mut cost = RecordingLedger::new(cfg.weights);
    let mut m = m_init.clone();
    let mut lin = problem.linearize(&m, theta)?;
    cost.charge(CostKind::State, 1);
    cost.charge(CostKind::Gradient, 1);
    let mut grad_norms = vec![lin.gradient().norm()];
    let mut path = Vec::new();
    if cfg.record_path {
        path.push(m.to_vec());
    }
    let mut iterations = 0;
    let mut pcg_iterations = 0;
    while grad_norms[iterations] > cfg.grad_tol && iterations < cfg.max_iter {
        let g = lin.gradient().clone();
        let op = HessianOperator::new(lin.as_ref(), problem.dim());
        let res = pcg_solve(&op, &g, &prec, &pcg)?;
        cost.charge(CostKind::H, res.applies as u64);
        pcg_iterations += res.iters;
        let mut step = res.x;
        if matches!(res.status, PcgStatus::IndefiniteCurvature { .. }) && step.norm() == 0.0 {
            step = prec.0.solve(&g)?;
        }
        let slope = -g.dot(&step);
        if !(slope < 0.0) {
            step = prec.0.solve(&g)?;
        }
        let slope = -g.dot(&step);
        let f0 = lin.objective();
        let mut alpha = 1.0;
        let mut backtracks = 0;
        loop {
            let trial = m.sub(&step.scaled(alpha));
            cost.charge(CostKind::State, 1);
            cost.charge(CostKind::Gradient, 1);
            // A trial point whose forward problem cannot be solved counts as a rejected step.
            match problem.linearize(&trial, theta) {
                Ok(l) if l.objective() <= f0 + cfg.armijo * alpha * slope => {
                    m = trial;
                    lin = l;
                    break;
                }
                Ok(_)
                | Err(Error::StateSolveFailure(_) | Error::LinearSolveFailure(_) | Error::NonFinite { .. }) => {}
                Err(e) => return Err(e),
            }
            backtracks += 1;
            if backtracks > cfg.max_backtracks {
                return Err(Error::LineSearchFailure { backtracks });
            }
            alpha *= 0.5;
        }
        iterations += 1;
        grad_norms.push(lin.gradient().norm());
        if cfg.record_path {
            path.push(m.to_vec());
        }
    }
    Ok(NewtonResult {
        converged: grad_norms[iterations] <= cfg.grad_tol,
        m: m.to_vec(),
        ledger: cost.ledger,
        events: cost.events,
        iterations,
        hessian_solves: iterations,
        pcg_iterations,
        grad_norms,
        path,
    })
}

/// Tight Newton solve used to produce reference minimizers.
pub fn minimize(problem: &dyn Problem, theta: &Vector, m_init: &Vector, grad_tol: f64) -> Result<Vector> {
    let cfg = NewtonConfig {
        grad_tol,
        eps_cg: 1e-8,
        max_iter: 500,
        pcg_max_iter: 5000,
        ..NewtonConfig::default()
    };
    let res = newton_reoptimize(problem, theta, m_init, &cfg)?;
    if !res.converged {
        return Err(Error::TolsatStall {
            iterations: res.iterations,
            grad_norm: *res.grad_norms.last().unwrap_or(&f64::NAN),
        });
    }
    Vector::new(res.m)
}
