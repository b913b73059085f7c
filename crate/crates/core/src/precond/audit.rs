//! Probes for the structural invariants of an updated preconditioner.

use serde::{Deserialize, Serialize};

use super::{PreconditionerState, QnUpdate};
use crate::error::Result;
use crate::linalg::{seeded_gaussian, Vector};

/// Estimate of `|E|`: the best seeded Gaussian probe, refined by a few power steps.
pub fn operator_scale(e: &PreconditionerState, probes: usize, seed: u64) -> Result<f64> {
    let mut best = 0.0f64;
    let mut start = None;
    for k in 0..probes {
        let r = seeded_gaussian(e.dim(), seed.wrapping_add(k as u64));
        let ratio = e.apply(&r)?.norm() / r.norm();
        if ratio > best {
            best = ratio;
            start = Some(r);
        }
    }
    if let Some(mut x) = start {
        for _ in 0..POWER_STEPS {
            let nx = x.norm();
            if nx == 0.0 {
                break;
            }
            x.scale(1.0 / nx);
            x = e.apply(&x)?;
            best = best.max(x.norm());
        }
    }
    Ok(best)
}

const POWER_STEPS: usize = 10;

/// `|E y - z| / (|z| + scale |y|)`.
pub fn parametric_secant_residual(
    e: &PreconditionerState,
    z: &Vector,
    y: &Vector,
    scale: f64,
) -> Result<f64> {
    let ey = e.apply(y)?;
    let denom = z.norm() + scale * y.norm();
    Ok(if denom > 0.0 { ey.sub(z).norm() / denom } else { 0.0 })
}

/// Worst relative secant residual `|E w_i - p_i| / |p_i|`.
pub fn block_secant_residual(e: &PreconditionerState, p: &[Vector], w: &[Vector]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (pi, wi) in p.iter().zip(w) {
        let np = pi.norm();
        if np > 0.0 {
            worst = worst.max(e.apply(wi)?.sub(pi).norm() / np);
        }
    }
    Ok(worst)
}

/// Largest `|r^T E s - s^T E r| / (scale |r| |s|)` over probe pairs.
pub fn symmetry_defect(e: &PreconditionerState, probes: usize, seed: u64, scale: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..probes {
        let r = seeded_gaussian(e.dim(), seed.wrapping_add(2 * k as u64));
        let s = seeded_gaussian(e.dim(), seed.wrapping_add(2 * k as u64 + 1));
        let lhs = r.dot(&e.apply(&s)?);
        let rhs = s.dot(&e.apply(&r)?);
        worst = worst.max((lhs - rhs).abs() / (scale * r.norm() * s.norm()));
    }
    Ok(worst)
}

/// Smallest Rayleigh quotient `r^T E r / |r|^2` over probes.
pub fn min_rayleigh_quotient(e: &PreconditionerState, probes: usize, seed: u64) -> Result<f64> {
    let mut least = f64::INFINITY;
    for k in 0..probes {
        let r = seeded_gaussian(e.dim(), seed.wrapping_add(k as u64));
        least = least.min(r.dot(&e.apply(&r)?) / r.dot(&r));
    }
    Ok(least)
}

/// Invariant probes taken right after one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateAudit {
    pub parametric: bool,
    pub rank: usize,
    pub secant_residual: f64,
    pub symmetry_defect: f64,
    pub min_rayleigh: f64,
}

impl UpdateAudit {
    /// Audits the most recent ledger entry of `e`, if any.
    pub fn latest(e: &PreconditionerState, probes: usize, seed: u64) -> Result<Option<Self>> {
        let Some(rec) = e.ledger().last() else {
            return Ok(None);
        };
        let scale = operator_scale(e, probes.max(1), seed)?;
        let secant_residual = match rec {
            QnUpdate::Parametric { z, y, .. } => parametric_secant_residual(e, z, y, scale)?,
            QnUpdate::Block { p, w, .. } => block_secant_residual(e, p, w)?,
        };
        Ok(Some(Self {
            parametric: rec.is_parametric(),
            rank: rec.rank(),
            secant_residual,
            symmetry_defect: symmetry_defect(e, probes, seed ^ 0x5eed, scale)?,
            min_rayleigh: min_rayleigh_quotient(e, probes, seed ^ 0xface)?,
        }))
    }
}
