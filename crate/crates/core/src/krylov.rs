//! Preconditioned conjugate gradients that also records the search
//! directions `p_i` and operator products `w_i = A p_i` it generates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LinearOperator, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcgConfig {
    /// Relative residual tolerance: stop once `|r| <= eps_cg * |b|`.
    pub eps_cg: f64,
    pub max_iter: usize,
    pub record_pairs: bool,
    /// Keep at most this many `(p, w)` pairs (the first ones generated).
    pub record_cap: usize,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            eps_cg: 1e-2,
            max_iter: 500,
            record_pairs: true,
            record_cap: usize::MAX,
        }
    }
}

impl PcgConfig {
    pub fn with_tolerance(eps_cg: f64) -> Self {
        Self {
            eps_cg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_cg > 0.0 && self.eps_cg < 1.0) {
            return Err(Error::Config(format!(
                "eps_cg must lie in (0, 1), got {}",
                self.eps_cg
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Symmetric positive definite approximation of `A^{-1}`.
pub trait Preconditioner {
    fn dim(&self) -> usize;
    fn precondition(&self, r: &Vector) -> Result<Vector>;
}

#[derive(Clone, Copy, Debug)]
pub struct IdentityPreconditioner(pub usize);

impl Preconditioner for IdentityPreconditioner {
    fn dim(&self) -> usize {
        self.0
    }
    fn precondition(&self, r: &Vector) -> Result<Vector> {
        r.check_dim(self.0)?;
        Ok(r.clone())
    }
}

/// Any linear operator can serve as a preconditioner.
pub struct OperatorPreconditioner<'a>(pub &'a dyn LinearOperator);

impl Preconditioner for OperatorPreconditioner<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn precondition(&self, r: &Vector) -> Result<Vector> {
        self.0.apply(r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PcgStatus {
    Converged,
    MaxIterExceeded,
    /// `p^T A p <= 0` was met; `x` holds the iterate before that direction.
    IndefiniteCurvature { iteration: usize, curvature: f64 },
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub x: Vector,
    pub pairs_p: Vec<Vector>,
    pub pairs_w: Vec<Vector>,
    pub iters: usize,
    /// `|r_k|` for k = 0..=iters; the first entry is `|b|`.
    pub residual_history: Vec<f64>,
    pub status: PcgStatus,
    /// Number of operator applies consumed.
    pub applies: usize,
}

impl PcgResult {
    pub fn converged(&self) -> bool {
        self.status == PcgStatus::Converged
    }

    /// Turns an indefinite-curvature stop into an error. Running out of
    /// iterations is not an error here: the best iterate is still usable.
    pub fn into_checked(self) -> Result<Self> {
        match self.status {
            PcgStatus::IndefiniteCurvature {
                iteration,
                curvature,
            } => Err(Error::IndefiniteCurvature {
                iteration,
                curvature,
            }),
            _ => Ok(self),
        }
    }
}

/// Solves `A x = b` from `x = 0`.
///
/// The stopping test uses the recursively updated, unpreconditioned residual
/// `r`, i.e. `sqrt(rho_k) <= eps_cg * |b|`.
pub fn pcg_solve(
    a: &dyn LinearOperator,
    b: &Vector,
    e: &dyn Preconditioner,
    cfg: &PcgConfig,
) -> Result<PcgResult> {
    cfg.validate()?;
    let n = a.dim();
    b.check_dim(n)?;
    if e.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: e.dim(),
        });
    }

    let b_norm = b.norm();
    let target = cfg.eps_cg * b_norm;
    let mut x = Vector::zeros(n);
    let mut r = b.clone();
    let mut rho = b_norm * b_norm;
    let mut residual_history = vec![b_norm];
    let mut pairs_p = Vec::new();
    let mut pairs_w = Vec::new();
    let mut p = Vector::zeros(n);
    let mut tau_prev = 0.0;
    let mut iters = 0;
    let mut status = PcgStatus::Converged;

    while rho.sqrt() > target {
        if iters == cfg.max_iter {
            status = PcgStatus::MaxIterExceeded;
            break;
        }
        let z = e.precondition(&r)?;
        let tau = z.dot(&r);
        if iters == 0 {
            p = z;
        } else {
            let beta = tau / tau_prev;
            p.scale(beta);
            p.axpy(1.0, &z);
        }
        let w = a.apply(&p)?;
        iters += 1;
        let curvature = p.dot(&w);
        if !(curvature > 0.0) {
            status = PcgStatus::IndefiniteCurvature {
                iteration: iters,
                curvature,
            };
            residual_history.push(rho.sqrt());
            break;
        }
        let alpha = tau / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &w);
        rho = r.dot(&r);
        residual_history.push(rho.sqrt());
        if !rho.is_finite() || !x.is_finite() {
            return Err(Error::LinearSolveFailure(
                "PCG iterate became non-finite".into(),
            ));
        }
        if cfg.record_pairs && pairs_p.len() < cfg.record_cap {
            pairs_p.push(p.clone());
            pairs_w.push(w);
        }
        tau_prev = tau;
    }

    Ok(PcgResult {
        x,
        pairs_p,
        pairs_w,
        iters,
        residual_history,
        status,
        applies: iters,
    })
}
