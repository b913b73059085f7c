//! The parameterized objective `J(m, theta)` as seen by the solvers.

use std::sync::Arc;

use crate::error::Result;
use crate::krylov::Preconditioner;
use crate::linalg::{CostTag, LinearOperator, Vector};

/// The SPD regularization operator `R` and its symmetric square root.
pub trait Regularization: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &Vector) -> Result<Vector>;
    fn solve(&self, v: &Vector) -> Result<Vector>;
    /// `R^{1/2} v`, with `R^{1/2}` symmetric.
    fn sqrt_apply(&self, v: &Vector) -> Result<Vector>;
    fn sqrt_solve(&self, v: &Vector) -> Result<Vector>;
}

/// `R = c I` for a scalar `c > 0`.
#[derive(Clone, Debug)]
pub struct ScaledIdentity {
    pub dim: usize,
    pub scale: f64,
}

impl Regularization for ScaledIdentity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, v: &Vector) -> Result<Vector> {
        v.check_dim(self.dim)?;
        Ok(v.scaled(self.scale))
    }
    fn solve(&self, v: &Vector) -> Result<Vector> {
        v.check_dim(self.dim)?;
        Ok(v.scaled(1.0 / self.scale))
    }
    fn sqrt_apply(&self, v: &Vector) -> Result<Vector> {
        v.check_dim(self.dim)?;
        Ok(v.scaled(self.scale.sqrt()))
    }
    fn sqrt_solve(&self, v: &Vector) -> Result<Vector> {
        v.check_dim(self.dim)?;
        Ok(v.scaled(1.0 / self.scale.sqrt()))
    }
}

/// Derivative information at one point `(m, theta)`.
///
/// Building one costs a state solve plus an adjoint solve; every product
/// afterwards reuses the cached state, adjoint, and factorizations.
pub trait Linearization {
    fn objective(&self) -> f64;
    fn gradient(&self) -> &Vector;
    /// Mixed derivative product `B(m, theta) dtheta`. Two linearized solves.
    fn mixed_apply(&self, dtheta: &Vector) -> Result<Vector>;
    /// Hessian product `H(m, theta) p`. Two linearized solves.
    fn hess_apply(&self, p: &Vector) -> Result<Vector>;
    /// Data-misfit part of the Hessian, `H_M p = H p - R p`.
    fn misfit_hess_apply(&self, p: &Vector) -> Result<Vector>;
}

pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn theta_dim(&self) -> usize;
    fn linearize(&self, m: &Vector, theta: &Vector) -> Result<Box<dyn Linearization + '_>>;
    fn regularization(&self) -> Arc<dyn Regularization>;
}

/// The Hessian at a linearization point, as a PCG operator.
pub struct HessianOperator<'a> {
    lin: &'a dyn Linearization,
    dim: usize,
}

impl<'a> HessianOperator<'a> {
    pub fn new(lin: &'a dyn Linearization, dim: usize) -> Self {
        Self { lin, dim }
    }
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &Vector) -> Result<Vector> {
        self.lin.hess_apply(x)
    }
    fn cost_tag(&self) -> CostTag {
        CostTag::Linearized
    }
}

/// `E = R^{-1}` as a preconditioner.
pub struct RegularizationPreconditioner(pub Arc<dyn Regularization>);

impl Preconditioner for RegularizationPreconditioner {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn precondition(&self, r: &Vector) -> Result<Vector> {
        self.0.solve(r)
    }
}
