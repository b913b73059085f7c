//! Adjoint-method derivatives over a discretized PDE residual `c(u, m, theta) = 0`.
//!
//! The objective is `J(m, theta) = misfit(u(m, theta)) + 1/2 m^T R m`. With
//! the Lagrangian `misfit + lambda^T c`, the gradient, the mixed product
//! `B dtheta`, and the Hessian product `H p` all reduce to one state solve
//! plus incremental solves with `K = dc/du` or its transpose.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problem::{Linearization, Problem, Regularization};

/// Discretized PDE residual with its first derivatives and the
/// second-derivative contractions against an adjoint `lambda`.
///
/// Contractions whose tensors vanish for a given model may keep the zero
/// defaults.
pub trait ResidualContract: Send + Sync {
    /// Factorization of `K = dc/du` at a linearization point.
    type Factor;

    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn theta_dim(&self) -> usize;

    fn residual(&self, u: &Vector, m: &Vector, theta: &Vector) -> Result<Vector>;
    fn solve_state(&self, m: &Vector, theta: &Vector) -> Result<Vector>;
    fn factor(&self, u: &Vector, m: &Vector, theta: &Vector) -> Result<Self::Factor>;
    /// `K x`.
    fn jac_u_apply(&self, f: &Self::Factor, x: &Vector) -> Result<Vector>;
    /// Solves `K x = rhs`.
    fn jac_u_solve(&self, f: &Self::Factor, rhs: &Vector) -> Result<Vector>;
    /// Solves `K^T x = rhs`.
    fn jac_u_solve_transpose(&self, f: &Self::Factor, rhs: &Vector) -> Result<Vector>;

    /// `(dc/dm) p`, a state-space vector.
    fn jac_m_apply(&self, u: &Vector, m: &Vector, theta: &Vector, p: &Vector) -> Result<Vector>;
    /// `(dc/dm)^T mu`, a parameter-space vector.
    fn jac_m_transpose(&self, u: &Vector, m: &Vector, theta: &Vector, mu: &Vector) -> Result<Vector>;
    /// `(dc/dtheta) dtheta`, a state-space vector.
    fn jac_theta_apply(&self, u: &Vector, m: &Vector, theta: &Vector, dtheta: &Vector) -> Result<Vector>;

    /// `grad_uu c [lambda] xi`.
    fn c_uu(&self, _u: &Vector, _m: &Vector, _theta: &Vector, _lambda: &Vector, xi: &Vector) -> Result<Vector> {
        Ok(Vector::zeros(xi.dim()))
    }
    /// `grad_um c [lambda] p`, a state-space vector.
    fn c_um(&self, u: &Vector, m: &Vector, theta: &Vector, lambda: &Vector, p: &Vector) -> Result<Vector>;
    /// `grad_mu c [lambda] xi`, a parameter-space vector.
    fn c_mu(&self, u: &Vector, m: &Vector, theta: &Vector, lambda: &Vector, xi: &Vector) -> Result<Vector>;
    /// `grad_mm c [lambda] p`.
    fn c_mm(&self, u: &Vector, m: &Vector, theta: &Vector, lambda: &Vector, p: &Vector) -> Result<Vector>;
    /// `grad_u,theta c [lambda] dtheta`, a state-space vector.
    fn c_utheta(&self, u: &Vector, _m: &Vector, _theta: &Vector, _lambda: &Vector, _dtheta: &Vector) -> Result<Vector> {
        Ok(Vector::zeros(u.dim()))
    }
    /// `grad_m,theta c [lambda] dtheta`, a parameter-space vector.
    fn c_mtheta(&self, _u: &Vector, m: &Vector, _theta: &Vector, _lambda: &Vector, _dtheta: &Vector) -> Result<Vector> {
        Ok(Vector::zeros(m.dim()))
    }

    fn misfit(&self, u: &Vector) -> Result<f64>;
    fn misfit_grad_u(&self, u: &Vector) -> Result<Vector>;
    fn misfit_hess_u(&self, u: &Vector, xi: &Vector) -> Result<Vector>;

    fn regularization(&self) -> Arc<dyn Regularization>;
}

/// Solve counts charged by one derivative evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostDelta {
    pub state: u64,
    pub linearized: u64,
}

impl CostDelta {
    pub const GRADIENT: Self = Self { state: 1, linearized: 1 };
    pub const MIXED: Self = Self { state: 0, linearized: 2 };
    pub const HESSIAN: Self = Self { state: 0, linearized: 2 };
}

impl std::ops::Add for CostDelta {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            state: self.state + o.state,
            linearized: self.linearized + o.linearized,
        }
    }
}

/// State, adjoint, and factorization cached at one `(m, theta)`.
pub struct AdjointWorkspace<F> {
    m: Vector,
    theta: Vector,
    pub u: Vector,
    pub lambda: Vector,
    factor: F,
    objective: f64,
    gradient: Vector,
}

impl<F> AdjointWorkspace<F> {
    pub fn key(&self) -> (&Vector, &Vector) {
        (&self.m, &self.theta)
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn gradient(&self) -> &Vector {
        &self.gradient
    }

    fn check_key(&self, m: &Vector, theta: &Vector) -> Result<()> {
        if &self.m == m && &self.theta == theta {
            Ok(())
        } else {
            Err(Error::StaleWorkspace)
        }
    }
}

/// State solve, adjoint solve, and the reduced gradient
/// `g = (dc/dm)^T lambda + R m`.
pub fn evaluate<C: ResidualContract>(
    rc: &C,
    m: &Vector,
    theta: &Vector,
) -> Result<(AdjointWorkspace<C::Factor>, CostDelta)> {
    m.check_dim(rc.param_dim())?;
    theta.check_dim(rc.theta_dim())?;
    let u = rc.solve_state(m, theta)?;
    u.check_dim(rc.state_dim())?;
    let factor = rc.factor(&u, m, theta)?;
    let rhs = rc.misfit_grad_u(&u)?.scaled(-1.0);
    let lambda = rc.jac_u_solve_transpose(&factor, &rhs)?;
    let reg = rc.regularization();
    let rm = reg.apply(m)?;
    let objective = rc.misfit(&u)? + 0.5 * m.dot(&rm);
    let gradient = rc.jac_m_transpose(&u, m, theta, &lambda)?.add(&rm);
    if !gradient.is_finite() {
        return Err(Error::LinearSolveFailure("non-finite gradient".into()));
    }
    Ok((
        AdjointWorkspace {
            m: m.clone(),
            theta: theta.clone(),
            u,
            lambda,
            factor,
            objective,
            gradient,
        },
        CostDelta::GRADIENT,
    ))
}

/// `B(m, theta) dtheta` from a workspace built at `(m, theta)`.
pub fn mixed_vec<C: ResidualContract>(
    rc: &C,
    ws: &AdjointWorkspace<C::Factor>,
    dtheta: &Vector,
) -> Result<(Vector, CostDelta)> {
    dtheta.check_dim(rc.theta_dim())?;
    let (m, theta, u, lam) = (&ws.m, &ws.theta, &ws.u, &ws.lambda);
    let src = rc.jac_theta_apply(u, m, theta, dtheta)?.scaled(-1.0);
    let xi = rc.jac_u_solve(&ws.factor, &src)?;
    let mut nu = rc.misfit_hess_u(u, &xi)?;
    nu = nu.add(&rc.c_uu(u, m, theta, lam, &xi)?);
    nu = nu.add(&rc.c_utheta(u, m, theta, lam, dtheta)?);
    let beta = rc.jac_u_solve_transpose(&ws.factor, &nu.scaled(-1.0))?;
    let out = rc
        .jac_m_transpose(u, m, theta, &beta)?
        .add(&rc.c_mu(u, m, theta, lam, &xi)?)
        .add(&rc.c_mtheta(u, m, theta, lam, dtheta)?);
    Ok((out, CostDelta::MIXED))
}

/// Gradient, `B dtheta`, and the workspace for later Hessian products.
pub fn grad_and_bdtheta<C: ResidualContract>(
    rc: &C,
    m: &Vector,
    theta: &Vector,
    dtheta: &Vector,
) -> Result<(Vector, Vector, AdjointWorkspace<C::Factor>, CostDelta)> {
    let (ws, c1) = evaluate(rc, m, theta)?;
    let (b, c2) = mixed_vec(rc, &ws, dtheta)?;
    Ok((ws.gradient.clone(), b, ws, c1 + c2))
}

/// `H(m, theta) p`, including the `grad_mm c [lambda] p` and `R p` terms.
pub fn hess_vec<C: ResidualContract>(
    rc: &C,
    m: &Vector,
    theta: &Vector,
    ws: &AdjointWorkspace<C::Factor>,
    p: &Vector,
) -> Result<(Vector, CostDelta)> {
    ws.check_key(m, theta)?;
    let hp = misfit_hess_vec(rc, ws, p)?.add(&rc.regularization().apply(p)?);
    Ok((hp, CostDelta::HESSIAN))
}

fn misfit_hess_vec<C: ResidualContract>(
    rc: &C,
    ws: &AdjointWorkspace<C::Factor>,
    p: &Vector,
) -> Result<Vector> {
    p.check_dim(rc.param_dim())?;
    let (m, theta, u, lam) = (&ws.m, &ws.theta, &ws.u, &ws.lambda);
    let src = rc.jac_m_apply(u, m, theta, p)?.scaled(-1.0);
    let xi = rc.jac_u_solve(&ws.factor, &src)?;
    let nu = rc
        .misfit_hess_u(u, &xi)?
        .add(&rc.c_uu(u, m, theta, lam, &xi)?)
        .add(&rc.c_um(u, m, theta, lam, p)?);
    let beta = rc.jac_u_solve_transpose(&ws.factor, &nu.scaled(-1.0))?;
    Ok(rc
        .jac_m_transpose(u, m, theta, &beta)?
        .add(&rc.c_mu(u, m, theta, lam, &xi)?)
        .add(&rc.c_mm(u, m, theta, lam, p)?))
}

/// Any residual contract viewed as a [`Problem`].
pub struct AdjointProblem<C> {
    pub contract: C,
}

impl<C> AdjointProblem<C> {
    pub fn new(contract: C) -> Self {
        Self { contract }
    }
}

struct AdjointLinearization<'a, C: ResidualContract> {
    rc: &'a C,
    ws: AdjointWorkspace<C::Factor>,
    reg: Arc<dyn Regularization>,
}

impl<C: ResidualContract> Linearization for AdjointLinearization<'_, C> {
    fn objective(&self) -> f64 {
        self.ws.objective
    }
    fn gradient(&self) -> &Vector {
        &self.ws.gradient
    }
    fn mixed_apply(&self, dtheta: &Vector) -> Result<Vector> {
        Ok(mixed_vec(self.rc, &self.ws, dtheta)?.0)
    }
    fn hess_apply(&self, p: &Vector) -> Result<Vector> {
        Ok(misfit_hess_vec(self.rc, &self.ws, p)?.add(&self.reg.apply(p)?))
    }
    fn misfit_hess_apply(&self, p: &Vector) -> Result<Vector> {
        misfit_hess_vec(self.rc, &self.ws, p)
    }
}

impl<C: ResidualContract> Problem for AdjointProblem<C> {
    fn dim(&self) -> usize {
        self.contract.param_dim()
    }
    fn theta_dim(&self) -> usize {
        self.contract.theta_dim()
    }
    fn linearize(&self, m: &Vector, theta: &Vector) -> Result<Box<dyn Linearization + '_>> {
        let (ws, _) = evaluate(&self.contract, m, theta)?;
        Ok(Box::new(AdjointLinearization {
            rc: &self.contract,
            ws,
            reg: self.contract.regularization(),
        }))
    }
    fn regularization(&self) -> Arc<dyn Regularization> {
        self.contract.regularization()
    }
}

/// Central finite-difference oracles for any [`Problem`].
pub mod fd {
    use super::*;

    pub const DEFAULT_STEP: f64 = 1e-5;

    fn rel(err: f64, scale: f64) -> f64 {
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }

    /// `|(J(m + h d) - J(m - h d)) / 2h - g^T d| / |g^T d|`.
    pub fn gradient_error(p: &dyn Problem, m: &Vector, theta: &Vector, d: &Vector, h: f64) -> Result<f64> {
        let g = p.linearize(m, theta)?.gradient().dot(d);
        let mut mp = m.clone();
        mp.axpy(h, d);
        let mut mm = m.clone();
        mm.axpy(-h, d);
        let jp = p.linearize(&mp, theta)?.objective();
        let jm = p.linearize(&mm, theta)?.objective();
        Ok(rel(((jp - jm) / (2.0 * h) - g).abs(), g.abs()))
    }

    /// `|(g(m + h d) - g(m - h d)) / 2h - H d| / |H d|`.
    pub fn hessian_error(p: &dyn Problem, m: &Vector, theta: &Vector, d: &Vector, h: f64) -> Result<f64> {
        let hd = p.linearize(m, theta)?.hess_apply(d)?;
        let mut mp = m.clone();
        mp.axpy(h, d);
        let mut mm = m.clone();
        mm.axpy(-h, d);
        let gp = p.linearize(&mp, theta)?.gradient().clone();
        let gm = p.linearize(&mm, theta)?.gradient().clone();
        let fd = gp.sub(&gm).scaled(0.5 / h);
        Ok(rel(fd.sub(&hd).norm(), hd.norm()))
    }

    /// `|(g(theta + h dt) - g(theta - h dt)) / 2h - B dt| / |B dt|`.
    pub fn mixed_error(p: &dyn Problem, m: &Vector, theta: &Vector, dt: &Vector, h: f64) -> Result<f64> {
        let bd = p.linearize(m, theta)?.mixed_apply(dt)?;
        let mut tp = theta.clone();
        tp.axpy(h, dt);
        let mut tm = theta.clone();
        tm.axpy(-h, dt);
        let gp = p.linearize(m, &tp)?.gradient().clone();
        let gm = p.linearize(m, &tm)?.gradient().clone();
        let fd = gp.sub(&gm).scaled(0.5 / h);
        Ok(rel(fd.sub(&bd).norm(), bd.norm()))
    }

    /// `|p^T H q - q^T H p| / (|p| |q| |H|_est)` with `|H|_est = max(|Hp|/|p|, |Hq|/|q|)`.
    pub fn hessian_asymmetry(lin: &dyn Linearization, p: &Vector, q: &Vector) -> Result<f64> {
        let hp = lin.hess_apply(p)?;
        let hq = lin.hess_apply(q)?;
        let scale = (hp.norm() / p.norm()).max(hq.norm() / q.norm());
        Ok(rel((p.dot(&hq) - q.dot(&hp)).abs(), p.norm() * q.norm() * scale))
    }
}
