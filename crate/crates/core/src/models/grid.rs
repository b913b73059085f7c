//! Vertex-centered finite-volume discretization of `-div(k grad u)` on the
//! unit square. Nodes are numbered `j * (nx + 1) + i`; rows `j = 0` and
//! `j = ny` carry Dirichlet data, columns `i = 0` and `i = nx` are
//! zero-flux (half control volumes).

use crate::error::Result;
use crate::linalg::{BandCholesky, SymBandMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    /// Face length over node spacing.
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    faces: Vec<Face>,
    areas: Vec<f64>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize) -> Self {
        assert!(nx >= 1 && ny >= 2, "grid needs at least one free row");
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        let half = |k: usize, n: usize| if k == 0 || k == n { 0.5 } else { 1.0 };
        let mut faces = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
        let mut areas = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let k = j * (nx + 1) + i;
                areas.push(hx * hy * half(i, nx) * half(j, ny));
                if i < nx {
                    faces.push(Face {
                        a: k,
                        b: k + 1,
                        weight: hy * half(j, ny) / hx,
                    });
                }
                if j < ny {
                    faces.push(Face {
                        a: k,
                        b: k + nx + 1,
                        weight: hx * half(i, nx) / hy,
                    });
                }
            }
        }
        Self {
            nx,
            ny,
            hx,
            hy,
            faces,
            areas,
        }
    }

    pub fn nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn free_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny - 1)
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn coords(&self, node: usize) -> (f64, f64) {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        let j = node / (self.nx + 1);
        j == 0 || j == self.ny
    }

    /// Position of a node among the free unknowns.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        if self.is_dirichlet(node) {
            None
        } else {
            Some(node - (self.nx + 1))
        }
    }

    pub fn nodal(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.nodes())
            .map(|k| {
                let (x, y) = self.coords(k);
                f(x, y)
            })
            .collect()
    }

    /// Nodal values of `f` times control-volume areas.
    pub fn lumped(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodal(f).iter().zip(&self.areas).map(|(v, a)| v * a).collect()
    }

    /// Free-node vector extended by `boundary` on Dirichlet nodes.
    pub fn extend(&self, free: &[f64], boundary: &[f64]) -> Vec<f64> {
        let mut full = boundary.to_vec();
        let off = self.nx + 1;
        full[off..off + free.len()].copy_from_slice(free);
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let off = self.nx + 1;
        full[off..off + self.free_nodes()].to_vec()
    }

    /// Face coefficients `(e^{m_a} + e^{m_b}) / 2`.
    pub fn face_coefficients(&self, m: &[f64]) -> Vec<f64> {
        self.faces
            .iter()
            .map(|f| 0.5 * (m[f.a].exp() + m[f.b].exp()))
            .collect()
    }

    /// Free-free block of the stiffness matrix for face coefficients `k`.
    pub fn stiffness_free(&self, k: &[f64]) -> SymBandMatrix {
        let mut a = SymBandMatrix::zeros(self.free_nodes(), self.nx + 1);
        for (f, &kf) in self.faces.iter().zip(k) {
            let v = kf * f.weight;
            match (self.free_index(f.a), self.free_index(f.b)) {
                (Some(p), Some(q)) => {
                    a.add(p, p, v);
                    a.add(q, q, v);
                    a.add(p, q, -v);
                }
                (Some(p), None) => a.add(p, p, v),
                (None, Some(q)) => a.add(q, q, v),
                (None, None) => {}
            }
        }
        a
    }

    /// `sum_f k_f w_f (v_a - v_b)(e_a - e_b)` over all nodes.
    pub fn flux_divergence(&self, k: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes()];
        for (f, &kf) in self.faces.iter().zip(k) {
            let flux = kf * f.weight * (v[f.a] - v[f.b]);
            out[f.a] += flux;
            out[f.b] -= flux;
        }
        out
    }

    /// Solves the Dirichlet problem with lumped load `load` (full-length)
    /// and Dirichlet values taken from `boundary` (full-length).
    pub fn solve(&self, m: &[f64], load: &[f64], boundary: &[f64]) -> Result<Vec<f64>> {
        let k = self.face_coefficients(m);
        let chol = self.stiffness_free(&k).cholesky()?;
        Ok(self.extend(&self.solve_with(&chol, &k, load, boundary), boundary))
    }

    pub(crate) fn solve_with(&self, chol: &BandCholesky, k: &[f64], load: &[f64], boundary: &[f64]) -> Vec<f64> {
        let lift = self.flux_divergence(k, &self.boundary_only(boundary));
        let rhs: Vec<f64> = self
            .restrict(load)
            .iter()
            .zip(self.restrict(&lift))
            .map(|(f, l)| f - l)
            .collect();
        chol.solve(&rhs)
    }

    /// Zeroes every non-Dirichlet entry.
    pub fn boundary_only(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes()];
        for (k, o) in out.iter_mut().enumerate() {
            if self.is_dirichlet(k) {
                *o = v[k];
            }
        }
        out
    }
}

/// Bilinear interpolation from grid nodes to fixed points.
#[derive(Clone, Debug)]
pub struct Interpolator {
    points: Vec<(f64, f64)>,
    stencil: Vec<[(usize, f64); 4]>,
    nodes: usize,
}

impl Interpolator {
    pub fn new(grid: &Grid, points: Vec<(f64, f64)>) -> Self {
        let stencil = points
            .iter()
            .map(|&(x, y)| {
                let sx = (x / grid.hx).clamp(0.0, grid.nx as f64);
                let sy = (y / grid.hy).clamp(0.0, grid.ny as f64);
                let i0 = (sx.floor() as usize).min(grid.nx - 1);
                let j0 = (sy.floor() as usize).min(grid.ny - 1);
                let tx = sx - i0 as f64;
                let ty = sy - j0 as f64;
                let k = j0 * (grid.nx + 1) + i0;
                let up = grid.nx + 1;
                [
                    (k, (1.0 - tx) * (1.0 - ty)),
                    (k + 1, tx * (1.0 - ty)),
                    (k + up, (1.0 - tx) * ty),
                    (k + up + 1, tx * ty),
                ]
            })
            .collect();
        Self {
            points,
            stencil,
            nodes: grid.nodes(),
        }
    }

    /// `o x o` interior points at `((i + 1) / (o + 1), (j + 1) / (o + 1))`.
    pub fn uniform_interior(grid: &Grid, ox: usize, oy: usize) -> Self {
        let mut pts = Vec::with_capacity(ox * oy);
        for j in 0..oy {
            for i in 0..ox {
                pts.push(((i + 1) as f64 / (ox + 1) as f64, (j + 1) as f64 / (oy + 1) as f64));
            }
        }
        Self::new(grid, pts)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn apply(&self, full: &[f64]) -> Vec<f64> {
        self.stencil
            .iter()
            .map(|s| s.iter().map(|&(k, w)| w * full[k]).sum())
            .collect()
    }

    pub fn transpose(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes];
        for (s, &ri) in self.stencil.iter().zip(r) {
            for &(k, w) in s {
                out[k] += w * ri;
            }
        }
        out
    }
}
