//! Browser demo: three interactive continuation experiments compiled to
//! WebAssembly. Each export takes plain numbers and returns a JSON string.

use ptcont_core::continuation::{
    minimize, newton_reoptimize, run_continuation, ContinuationConfig, NewtonConfig, Predictor,
};
use ptcont_core::linalg::Vector;
use ptcont_core::models::{theta_paths_for_experiments, two_bump, Illustrative1D, PoissonConfig, PoissonModel};
use ptcont_core::problem::Problem;
use ptcont_core::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn predictor(modified: bool) -> Predictor {
    if modified {
        Predictor::ModifiedEuler
    } else {
        Predictor::ForwardEuler
    }
}

fn scalar(x: f64) -> Result<Vector> {
    Vector::new(vec![x])
}

#[derive(Clone, Debug, Serialize)]
pub struct StepPoint {
    pub theta: f64,
    pub m_pred: f64,
    pub m_next: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectories {
    pub theta_bar: f64,
    pub theta_target: f64,
    /// `(theta, m*(theta))` samples of the minimizer path.
    pub minimizer_path: Vec<(f64, f64)>,
    pub steps: Vec<StepPoint>,
    pub newton_iterates: Vec<f64>,
    pub continuation_solves: usize,
    pub newton_solves: usize,
    pub m_target: f64,
}

/// Continuation steps and warm-started Newton iterates on
/// `J(m, theta) = (m - theta)^6 + 0.01 m^2`, from `theta = 1` to `theta_target`.
pub fn illustrative(n_steps: usize, theta_target: f64, modified: bool) -> Result<Trajectories> {
    let p = Illustrative1D;
    let theta_bar = 1.0;
    let m0 = minimize(&p, &scalar(theta_bar)?, &scalar(0.0)?, 1e-10)?;
    let cfg = ContinuationConfig {
        n_steps,
        predictor: predictor(modified),
        eps_cg: 1e-10,
        grad_tol: 1e-10,
        r_update: 1,
        record_iterates: true,
        ..ContinuationConfig::default()
    };
    let (m_final, trace) =
        run_continuation(&p, &scalar(theta_bar)?, &scalar(theta_target)?, &m0, &cfg)?.into_result()?;
    let newton = newton_reoptimize(
        &p,
        &scalar(theta_target)?,
        &m0,
        &NewtonConfig {
            grad_tol: 1e-10,
            eps_cg: 1e-10,
            record_path: true,
            ..NewtonConfig::default()
        },
    )?;
    if !newton.converged {
        return Err(Error::TolsatStall {
            iterations: newton.iterations,
            grad_norm: newton.grad_norms.last().copied().unwrap_or(f64::NAN),
        });
    }

    let samples = 80;
    let mut minimizer_path = Vec::with_capacity(samples + 1);
    let mut m = m0.clone();
    for i in 0..=samples {
        let theta = theta_bar + (theta_target - theta_bar) * i as f64 / samples as f64;
        m = minimize(&p, &scalar(theta)?, &m, 1e-10)?;
        minimizer_path.push((theta, m[0]));
    }
    let steps = trace
        .steps
        .iter()
        .map(|s| StepPoint {
            theta: s.theta[0],
            m_pred: s.m_pred.as_ref().map_or(f64::NAN, |v| v[0]),
            m_next: s.m_next.as_ref().map_or(f64::NAN, |v| v[0]),
        })
        .collect();
    Ok(Trajectories {
        theta_bar,
        theta_target,
        minimizer_path,
        steps,
        newton_iterates: newton.path.iter().map(|v| v[0]).collect(),
        continuation_solves: trace.hessian_solves(),
        newton_solves: newton.hessian_solves,
        m_target: m_final[0],
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderStudy {
    pub n_steps: Vec<usize>,
    pub forward_euler: Vec<f64>,
    pub modified_euler: Vec<f64>,
    /// Least-squares slopes of `log error` against `log N`.
    pub slope_fe: f64,
    pub slope_me: f64,
}

fn slope(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Global error of predictor-only marches from `theta = 1` to `theta_target`.
pub fn order_study(theta_target: f64) -> Result<OrderStudy> {
    let p = Illustrative1D;
    let m0 = minimize(&p, &scalar(1.0)?, &scalar(0.0)?, 1e-12)?;
    let exact = minimize(&p, &scalar(theta_target)?, &m0, 1e-12)?[0];
    let n_steps = vec![4, 8, 16, 32];
    let mut errs = [Vec::new(), Vec::new()];
    for (k, modified) in [false, true].into_iter().enumerate() {
        for &n in &n_steps {
            let cfg = ContinuationConfig {
                n_steps: n,
                predictor: predictor(modified),
                eps_cg: 1e-10,
                grad_tol: 1e-10,
                r_update: 0,
                corrector: false,
                tolerance_satisfaction: false,
                ..ContinuationConfig::default()
            };
            let run = run_continuation(&p, &scalar(1.0)?, &scalar(theta_target)?, &m0, &cfg)?;
            errs[k].push((run.m_final[0] - exact).abs());
        }
    }
    let [forward_euler, modified_euler] = errs;
    Ok(OrderStudy {
        slope_fe: slope(&n_steps, &forward_euler),
        slope_me: slope(&n_steps, &modified_euler),
        n_steps,
        forward_euler,
        modified_euler,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonStep {
    pub theta_1: f64,
    pub pcg_iterations: Vec<usize>,
    pub cost_total: u64,
    pub stored_vectors: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonDemo {
    /// Nodes per row and per column of the field arrays.
    pub nodes_x: usize,
    pub nodes_y: usize,
    pub m_final: Vec<f64>,
    pub m_truth: Vec<f64>,
    pub steps: Vec<PoissonStep>,
    pub continuation_cost: u64,
    pub newton_cost: u64,
    pub stored_vectors: usize,
}

/// One continuation run on the Poisson inversion next to warm-started
/// Newton re-optimization.
pub fn poisson(mesh: usize, alpha: f64, n_steps: usize, modified: bool, eps_cg: f64, r_update: usize) -> Result<PoissonDemo> {
    if !(4..=32).contains(&mesh) {
        return Err(Error::Config("mesh must lie in 4..=32".into()));
    }
    let model = PoissonModel::new(PoissonConfig::with_mesh(mesh))?;
    let grid = model.grid().clone();
    let p = model.into_problem();
    let (tb, tt) = theta_paths_for_experiments(alpha);
    let m0 = minimize(&p, &tb, &Vector::zeros(p.dim()), 1e-8)?;
    let cfg = ContinuationConfig {
        n_steps,
        predictor: predictor(modified),
        eps_cg,
        r_update,
        ..ContinuationConfig::default()
    };
    let run = run_continuation(&p, &tb, &tt, &m0, &cfg)?;
    let stored_vectors = run.preconditioner.stored_vector_count();
    let (m_final, trace) = run.into_result()?;
    let newton = newton_reoptimize(
        &p,
        &tt,
        &m0,
        &NewtonConfig {
            eps_cg,
            ..NewtonConfig::default()
        },
    )?;
    Ok(PoissonDemo {
        nodes_x: grid.nx + 1,
        nodes_y: grid.ny + 1,
        m_final: m_final.to_vec(),
        m_truth: (0..grid.nodes()).map(|k| {
            let (x, y) = grid.coords(k);
            two_bump(x, y)
        }).collect(),
        steps: trace
            .steps
            .iter()
            .map(|s| PoissonStep {
                theta_1: s.theta[1],
                pcg_iterations: s.solves.iter().map(|r| r.iters).collect(),
                cost_total: s.cost_total,
                stored_vectors: s.stored_vectors,
                grad_norm: s.grad_after_tolsat,
            })
            .collect(),
        continuation_cost: trace.cost.total_linear_solves(),
        newton_cost: newton.ledger.total_linear_solves(),
        stored_vectors,
    })
}

fn to_json<T: Serialize>(r: Result<T>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

#[wasm_bindgen(js_name = illustrativeTrajectories)]
pub fn illustrative_trajectories(n_steps: usize, theta_target: f64, modified: bool) -> Result<String, JsValue> {
    to_json(illustrative(n_steps, theta_target, modified))
}

#[wasm_bindgen(js_name = orderStudy)]
pub fn order_study_json(theta_target: f64) -> Result<String, JsValue> {
    to_json(order_study(theta_target))
}

#[wasm_bindgen(js_name = poissonRun)]
pub fn poisson_run(
    mesh: usize,
    alpha: f64,
    n_steps: usize,
    modified: bool,
    eps_cg: f64,
    r_update: usize,
) -> Result<String, JsValue> {
    to_json(poisson(mesh, alpha, n_steps, modified, eps_cg, r_update))
}
