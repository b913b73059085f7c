use crate::error::{Error, Result};

/// Default cap on the order accepted by [`sym_eig`].
pub const DEFAULT_BLOCK_CAP: usize = 200;

const MAX_SWEEPS: usize = 100;

/// Small dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallSymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SmallSymMatrix {
    /// Builds from row-major entries, symmetrizing by averaging `a_ij` and `a_ji`.
    pub fn new(order: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != order * order {
            return Err(Error::DimensionMismatch {
                expected: order * order,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        for i in 0..order {
            for j in (i + 1)..order {
                let avg = 0.5 * (data[i * order + j] + data[j * order + i]);
                data[i * order + j] = avg;
                data[j * order + i] = avg;
            }
        }
        Ok(Self { order, data })
    }

    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(order * order);
        for i in 0..order {
            for j in 0..order {
                data.push(f(i, j));
            }
        }
        Self::new(order, data)
    }

    pub fn identity(order: usize) -> Self {
        let mut data = vec![0.0; order * order];
        for i in 0..order {
            data[i * order + i] = 1.0;
        }
        Self { order, data }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Eigen-decomposition `M = V diag(values) V^T`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Column-major: `vectors[j]` is the eigenvector paired with `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi diagonalization.
pub fn sym_eig(m: &SmallSymMatrix) -> Result<SymEig> {
    sym_eig_capped(m, DEFAULT_BLOCK_CAP)
}

pub fn sym_eig_capped(m: &SmallSymMatrix, cap: usize) -> Result<SymEig> {
    let n = m.order;
    if n > cap {
        return Err(Error::DimensionMismatch {
            expected: cap,
            actual: n,
        });
    }
    let mut a = m.data.clone();
    let mut v = SmallSymMatrix::identity(n).data;
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = (f64::EPSILON * frob).powi(2);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|r| v[r * n + j]).collect())
        .collect();
    Ok(SymEig { values, vectors })
}
