//! Adaptive inverse-Hessian preconditioner.
//!
//! The preconditioner is kept as a base operator (`R^{-1}`, optionally with a
//! low-rank correction) plus an ordered ledger of BFGS-form updates. Each
//! update is the sandwich
//!
//! ```text
//! E_new = (I - P D^{-1} W^T) E_old (I - W D^{-1} P^T) + P D^{-1} P^T
//! ```
//!
//! with `D` diagonal; the parametric update is the rank-one case
//! `P = z`, `W = y`, `D = y^T z`. Applying the composite costs one
//! regularization solve plus two inner products and one axpy per stored
//! vector, so nothing of size `n x n` is ever formed.

mod audit;
mod lowrank;
mod sidecar;

pub use audit::{
    block_secant_residual, min_rayleigh_quotient, operator_scale, parametric_secant_residual,
    symmetry_defect, UpdateAudit,
};
pub use lowrank::{init_lowrank, init_lowrank_from, LowRankOptions, LowRankReport};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::krylov::Preconditioner;
use crate::linalg::{sym_eig, SmallSymMatrix, Vector};
use crate::problem::Regularization;

/// Curvature guard for the parametric update: accept only if
/// `y^T z > EPS_CURVATURE * |y| |z|`.
pub const EPS_CURVATURE: f64 = 1e-10;

/// Default curvature filter for block updates.
pub const DEFAULT_TAU: f64 = 1e-6;

/// Relative asymmetry of `P^T W` above which a block update is refused.
pub const ASYMMETRY_TOL: f64 = 1e-6;

/// Rotated columns that shrink below this fraction of their source norms
/// lie in the numerical null space of `P` and are dropped.
pub const CANCELLATION_TOL: f64 = 1e-6;

pub type RegSolve = Arc<dyn Fn(&Vector) -> Result<Vector> + Send + Sync>;

/// `E_0 = R^{-1} - V_r diag(gamma) V_r^T`.
#[derive(Clone)]
pub struct BasePreconditioner {
    dim: usize,
    reg_solve: RegSolve,
    basis: Vec<Vector>,
    gamma: Vec<f64>,
}

impl BasePreconditioner {
    pub fn new(dim: usize, reg_solve: RegSolve, basis: Vec<Vector>, gamma: Vec<f64>) -> Result<Self> {
        if basis.len() != gamma.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                actual: gamma.len(),
            });
        }
        for v in &basis {
            v.check_dim(dim)?;
        }
        if gamma.iter().any(|g| !(0.0..1.0).contains(g)) {
            return Err(Error::Config("low-rank weights must lie in [0, 1)".into()));
        }
        Ok(Self {
            dim,
            reg_solve,
            basis,
            gamma,
        })
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    fn apply(&self, r: &Vector) -> Result<Vector> {
        let mut out = (self.reg_solve)(r)?;
        check_dim(self.dim, out.dim())?;
        for (v, &g) in self.basis.iter().zip(&self.gamma) {
            if g != 0.0 {
                out.axpy(-g * v.dot(r), v);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QnUpdate {
    Parametric {
        z: Vector,
        y: Vector,
        rho: f64,
    },
    /// Rotated block data: `p[i]^T w[j] = d[i] delta_ij` up to rounding.
    Block {
        p: Vec<Vector>,
        w: Vec<Vector>,
        d: Vec<f64>,
    },
}

impl QnUpdate {
    pub fn rank(&self) -> usize {
        match self {
            QnUpdate::Parametric { .. } => 1,
            QnUpdate::Block { d, .. } => d.len(),
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, QnUpdate::Parametric { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UpdateOutcome {
    Applied { rank: usize },
    SkippedCurvature,
    Unchanged,
}

#[derive(Clone)]
pub struct PreconditionerState {
    base: BasePreconditioner,
    ledger: Vec<QnUpdate>,
    storage_cap: usize,
}

impl fmt::Debug for PreconditionerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreconditionerState")
            .field("dim", &self.base.dim)
            .field("base_rank", &self.base.basis.len())
            .field("ledger_len", &self.ledger.len())
            .field("stored_vectors", &self.stored_vector_count())
            .finish()
    }
}

impl PreconditionerState {
    /// `E = R^{-1}` with an empty ledger.
    pub fn init_identity_reg(dim: usize, reg_solve: RegSolve) -> Self {
        Self {
            base: BasePreconditioner {
                dim,
                reg_solve,
                basis: Vec::new(),
                gamma: Vec::new(),
            },
            ledger: Vec::new(),
            storage_cap: usize::MAX,
        }
    }

    pub fn from_regularization(reg: Arc<dyn Regularization>) -> Self {
        let dim = reg.dim();
        Self::init_identity_reg(dim, Arc::new(move |v: &Vector| reg.solve(v)))
    }

    pub fn from_base(base: BasePreconditioner) -> Self {
        Self {
            base,
            ledger: Vec::new(),
            storage_cap: usize::MAX,
        }
    }

    pub fn with_storage_cap(mut self, cap: usize) -> Self {
        self.storage_cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn base(&self) -> &BasePreconditioner {
        &self.base
    }

    pub fn ledger(&self) -> &[QnUpdate] {
        &self.ledger
    }

    pub fn stored_vector_count(&self) -> usize {
        self.base.basis.len() + self.ledger.iter().map(|u| 2 * u.rank()).sum::<usize>()
    }

    fn reserve(&self, extra: usize) -> Result<()> {
        let requested = self.stored_vector_count() + extra;
        if requested > self.storage_cap {
            Err(Error::StorageExceeded {
                cap: self.storage_cap,
                requested,
            })
        } else {
            Ok(())
        }
    }

    /// Parametric quasi-Newton update with `z = m_next - m_prev` and
    /// `y = g_next - g_prev - g_pred`, where `g_pred = dt B dtheta` was
    /// formed by the predictor.
    pub fn parametric_update(
        &mut self,
        m_prev: &Vector,
        m_next: &Vector,
        g_prev: &Vector,
        g_next: &Vector,
        g_pred: &Vector,
    ) -> Result<UpdateOutcome> {
        let n = self.dim();
        for v in [m_prev, m_next, g_prev, g_next, g_pred] {
            v.check_dim(n)?;
        }
        let z = m_next.sub(m_prev);
        let y = g_next.sub(g_prev).sub(g_pred);
        self.push_secant_pair(z, y)
    }

    /// Rank-one BFGS update enforcing `E y = z`, subject to the curvature guard.
    pub fn push_secant_pair(&mut self, z: Vector, y: Vector) -> Result<UpdateOutcome> {
        check_dim(self.dim(), z.dim())?;
        check_dim(self.dim(), y.dim())?;
        let yz = y.dot(&z);
        if !(yz > EPS_CURVATURE * y.norm() * z.norm()) {
            return Ok(UpdateOutcome::SkippedCurvature);
        }
        self.reserve(2)?;
        self.ledger.push(QnUpdate::Parametric { z, y, rho: 1.0 / yz });
        Ok(UpdateOutcome::Applied { rank: 1 })
    }

    /// Block quasi-Newton update from PCG pairs `w_i = H p_i`.
    ///
    /// Columns with `p_i^T w_i < tau |p_i|^2` are dropped, `D = P^T W` is
    /// diagonalized and the pairs rotated onto its eigenvectors, the filter is
    /// re-applied to the rotated columns, and the `r_update` columns of
    /// largest curvature are kept.
    pub fn block_update(
        &mut self,
        pairs_p: &[Vector],
        pairs_w: &[Vector],
        tau: f64,
        r_update: usize,
    ) -> Result<UpdateOutcome> {
        let n = self.dim();
        if pairs_p.len() != pairs_w.len() {
            return Err(Error::DimensionMismatch {
                expected: pairs_p.len(),
                actual: pairs_w.len(),
            });
        }
        for v in pairs_p.iter().chain(pairs_w) {
            v.check_dim(n)?;
        }
        if r_update == 0 || pairs_p.is_empty() {
            return Ok(UpdateOutcome::Unchanged);
        }

        let ell = pairs_p.len();
        let full = gram(pairs_p, pairs_w);
        let mut asym = 0.0;
        let mut total = 0.0;
        for i in 0..ell {
            for j in 0..ell {
                asym += (full[i * ell + j] - full[j * ell + i]).powi(2);
                total += full[i * ell + j].powi(2);
            }
        }
        let relative = if total > 0.0 { (asym / total).sqrt() } else { 0.0 };
        if relative > ASYMMETRY_TOL {
            return Err(Error::Asymmetry { relative });
        }

        let keep: Vec<usize> = (0..ell)
            .filter(|&i| {
                let c = full[i * ell + i];
                c > 0.0 && c >= tau * pairs_p[i].dot(&pairs_p[i])
            })
            .collect();
        if keep.is_empty() {
            return Ok(UpdateOutcome::Unchanged);
        }
        let k = keep.len();
        let d = SmallSymMatrix::from_fn(k, |a, b| full[keep[a] * ell + keep[b]])?;
        let eig = sym_eig(&d)?;

        let mut rotated: Vec<(Vector, Vector, f64)> = Vec::with_capacity(k);
        for col in &eig.vectors {
            let mut p = Vector::zeros(n);
            let mut w = Vector::zeros(n);
            let (mut p_ref, mut w_ref) = (0.0, 0.0);
            for (c, &src) in col.iter().zip(&keep) {
                p.axpy(*c, &pairs_p[src]);
                w.axpy(*c, &pairs_w[src]);
                p_ref += c.abs() * pairs_p[src].norm();
                w_ref += c.abs() * pairs_w[src].norm();
            }
            let cancelled = p.norm() <= CANCELLATION_TOL * p_ref || w.norm() <= CANCELLATION_TOL * w_ref;
            let curvature = p.dot(&w);
            if !cancelled && curvature > 0.0 && curvature >= tau * p.dot(&p) {
                rotated.push((p, w, curvature));
            }
        }
        if rotated.is_empty() {
            return Ok(UpdateOutcome::Unchanged);
        }
        rotated.sort_by(|a, b| b.2.total_cmp(&a.2));
        rotated.truncate(r_update);

        let rank = rotated.len();
        self.reserve(2 * rank)?;
        let mut p = Vec::with_capacity(rank);
        let mut w = Vec::with_capacity(rank);
        let mut dv = Vec::with_capacity(rank);
        for (pi, wi, di) in rotated {
            p.push(pi);
            w.push(wi);
            dv.push(di);
        }
        self.ledger.push(QnUpdate::Block { p, w, d: dv });
        Ok(UpdateOutcome::Applied { rank })
    }

    /// `E r`, composing the base operator with every ledger entry.
    pub fn apply(&self, r: &Vector) -> Result<Vector> {
        r.check_dim(self.dim())?;
        let mut q = r.clone();
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(self.ledger.len());
        for rec in self.ledger.iter().rev() {
            match rec {
                QnUpdate::Parametric { z, y, rho } => {
                    let a = rho * z.dot(&q);
                    q.axpy(-a, y);
                    coeffs.push(vec![a]);
                }
                QnUpdate::Block { p, w, d } => {
                    let a: Vec<f64> = p.iter().zip(d).map(|(pi, di)| pi.dot(&q) / di).collect();
                    for (wi, ai) in w.iter().zip(&a) {
                        q.axpy(-ai, wi);
                    }
                    coeffs.push(a);
                }
            }
        }
        let mut t = self.base.apply(&q)?;
        for rec in &self.ledger {
            let a = coeffs.pop().expect("one coefficient set per record");
            match rec {
                QnUpdate::Parametric { z, y, rho } => {
                    let b = rho * y.dot(&t);
                    t.axpy(a[0] - b, z);
                }
                QnUpdate::Block { p, w, d } => {
                    let b: Vec<f64> = w.iter().zip(d).map(|(wi, di)| wi.dot(&t) / di).collect();
                    for ((pi, ai), bi) in p.iter().zip(&a).zip(&b) {
                        t.axpy(ai - bi, pi);
                    }
                }
            }
        }
        Ok(t)
    }
}

impl Preconditioner for PreconditionerState {
    fn dim(&self) -> usize {
        self.base.dim
    }
    fn precondition(&self, r: &Vector) -> Result<Vector> {
        self.apply(r)
    }
}

fn gram(p: &[Vector], w: &[Vector]) -> Vec<f64> {
    let ell = p.len();
    let mut out = vec![0.0; ell * ell];
    for i in 0..ell {
        for j in 0..ell {
            out[i * ell + j] = p[i].dot(&w[j]);
        }
    }
    out
}

#[cfg(test)]
mod tests;
