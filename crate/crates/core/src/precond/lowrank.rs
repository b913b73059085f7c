//! Randomized low-rank start `E_0 = R^{-1} - V diag(gamma) V^T`.
//!
//! With `S = R^{-1/2} H_M R^{-1/2} = X diag(lambda) X^T` and `V = R^{-1/2} X`,
//! the choice `gamma = lambda / (1 + lambda)` makes `E_0` the exact inverse of
//! `H_M + R` on the captured subspace.

use std::sync::Arc;

use super::{BasePreconditioner, PreconditionerState};
use crate::error::{Error, Result};
use crate::linalg::{seeded_gaussian, sym_eig_capped, SmallSymMatrix, Vector};
use crate::problem::{Linearization, Problem, Regularization};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LowRankOptions {
    pub oversampling: usize,
    pub power_iterations: usize,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        Self {
            oversampling: 5,
            power_iterations: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowRankReport {
    /// Ritz values of `S`, descending, one per retained direction.
    pub eigenvalues: Vec<f64>,
    /// Number of `H_M` products spent.
    pub hess_applies: usize,
}

/// Linearizes `problem` at `(m0, theta0)` and builds the rank-`r_init` start.
pub fn init_lowrank(
    problem: &dyn Problem,
    m0: &Vector,
    theta0: &Vector,
    r_init: usize,
    seed: u64,
) -> Result<(PreconditionerState, LowRankReport)> {
    let lin = problem.linearize(m0, theta0)?;
    init_lowrank_from(lin.as_ref(), problem.regularization(), r_init, seed, LowRankOptions::default())
}

pub fn init_lowrank_from(
    lin: &dyn Linearization,
    reg: Arc<dyn Regularization>,
    r_init: usize,
    seed: u64,
    opts: LowRankOptions,
) -> Result<(PreconditionerState, LowRankReport)> {
    let n = reg.dim();
    let reg_for_solve = reg.clone();
    let solve: super::RegSolve = Arc::new(move |v: &Vector| reg_for_solve.solve(v));
    if r_init == 0 {
        let report = LowRankReport {
            eigenvalues: Vec::new(),
            hess_applies: 0,
        };
        return Ok((PreconditionerState::init_identity_reg(n, solve), report));
    }
    let k = (r_init + opts.oversampling).min(n);
    let mut applies = 0usize;
    let mut s_apply = |x: &Vector| -> Result<Vector> {
        applies += 1;
        let t = reg.sqrt_solve(x)?;
        let h = lin.misfit_hess_apply(&t)?;
        reg.sqrt_solve(&h)
    };

    let omega: Vec<Vector> = (0..k)
        .map(|j| seeded_gaussian(n, seed.wrapping_add(j as u64)))
        .collect();
    let mut y = omega
        .iter()
        .map(&mut s_apply)
        .collect::<Result<Vec<_>>>()?;

    let (eigenvalues, directions) = if y.iter().all(|v| v.norm() == 0.0) {
        let q = orthonormalize(omega);
        if q.len() < r_init.min(n) {
            return Err(Error::EigFailure {
                requested: r_init,
                found: q.len(),
            });
        }
        (vec![0.0; r_init.min(n)], q.into_iter().take(r_init).collect::<Vec<_>>())
    } else {
        let mut q = orthonormalize(y);
        for _ in 0..opts.power_iterations {
            y = q.iter().map(&mut s_apply).collect::<Result<Vec<_>>>()?;
            q = orthonormalize(y);
        }
        let sq = q.iter().map(&mut s_apply).collect::<Result<Vec<_>>>()?;
        let rank = q.len();
        let t = SmallSymMatrix::from_fn(rank, |a, b| 0.5 * (q[a].dot(&sq[b]) + q[b].dot(&sq[a])))?;
        let eig = sym_eig_capped(&t, rank.max(1))?;
        let want = r_init.min(n);
        if rank < want {
            return Err(Error::EigFailure {
                requested: r_init,
                found: rank,
            });
        }
        let mut vals = Vec::with_capacity(want);
        let mut dirs = Vec::with_capacity(want);
        for idx in (0..rank).rev().take(want) {
            let mut x = Vector::zeros(n);
            for (c, qj) in eig.vectors[idx].iter().zip(&q) {
                x.axpy(*c, qj);
            }
            vals.push(eig.values[idx]);
            dirs.push(x);
        }
        (vals, dirs)
    };

    let basis = directions
        .iter()
        .map(|x| reg.sqrt_solve(x))
        .collect::<Result<Vec<_>>>()?;
    let gamma = eigenvalues
        .iter()
        .map(|&l| {
            let l = l.max(0.0);
            l / (1.0 + l)
        })
        .collect();
    let base = BasePreconditioner::new(n, solve, basis, gamma)?;
    Ok((
        PreconditionerState::from_base(base),
        LowRankReport {
            eigenvalues,
            hess_applies: applies,
        },
    ))
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns that
/// collapse below `1e-10` of the largest input norm are dropped.
fn orthonormalize(cols: Vec<Vector>) -> Vec<Vector> {
    let scale = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out: Vec<Vector> = Vec::with_capacity(cols.len());
    if scale == 0.0 {
        return out;
    }
    for mut c in cols {
        for _ in 0..2 {
            for q in &out {
                let a = q.dot(&c);
                c.axpy(-a, q);
            }
        }
        let nrm = c.norm();
        if nrm > 1e-10 * scale {
            c.scale(1.0 / nrm);
            out.push(c);
        }
    }
    out
}
