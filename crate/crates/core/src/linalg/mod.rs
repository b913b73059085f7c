//! Dense kernels, operator contracts, and seeded randomness.

mod band;
mod sym;
mod vector;

pub use band::{BandCholesky, SymBandMatrix};
pub use sym::{sym_eig, sym_eig_capped, SmallSymMatrix, SymEig, DEFAULT_BLOCK_CAP};
pub use vector::Vector;
pub(crate) use vector::dot;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Which cost bucket an operator apply is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CostTag {
    State,
    Linearized,
    Free,
}

/// A linear map `R^n -> R^n`, applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Result<Vector>;
    fn cost_tag(&self) -> CostTag {
        CostTag::Free
    }
}

/// Operator backed by a closure.
pub struct FnOperator<F> {
    dim: usize,
    tag: CostTag,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    pub fn new(dim: usize, tag: CostTag, f: F) -> Self {
        Self { dim, tag, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim)?;
        let y = (self.f)(x)?;
        y.check_dim(self.dim)?;
        Ok(y)
    }
    fn cost_tag(&self) -> CostTag {
        self.tag
    }
}

/// Square dense matrix, row-major. Only used for small operators and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn diag(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.n)?;
        Ok(Vector::from_raw(self.matvec(x)))
    }
}

/// I.i.d. standard normal vector; identical output for identical `(dim, seed)`.
pub fn seeded_gaussian(dim: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_raw((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}
