//! Log-diffusivity inversion for `-div(e^m grad u) = h_theta` on the unit square.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::grid::{Grid, Interpolator};
use crate::adjoint::{AdjointProblem, ResidualContract};
use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, SymBandMatrix, Vector};
use crate::problem::Regularization;

pub const THETA_DIM: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonConfig {
    pub nx: usize,
    pub ny: usize,
    pub refinement: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub obs_x: usize,
    pub obs_y: usize,
    pub noise_level: f64,
    pub misfit_weight: f64,
    pub seed: u64,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self {
            nx: 24,
            ny: 24,
            refinement: 4,
            kappa: 10.0,
            gamma: 1e-3,
            obs_x: 10,
            obs_y: 10,
            noise_level: 0.02,
            misfit_weight: 1.0,
            seed: 0,
        }
    }
}

impl PoissonConfig {
    pub fn with_mesh(n: usize) -> Self {
        Self {
            nx: n,
            ny: n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 1 || self.ny < 2 {
            return Err(Error::Config("mesh needs nx >= 1 and ny >= 2".into()));
        }
        if self.refinement < 2 {
            return Err(Error::Config("data mesh refinement must be at least 2".into()));
        }
        if !(self.kappa > 0.0 && self.gamma > 0.0) {
            return Err(Error::Config("kappa and gamma must be positive".into()));
        }
        if self.obs_x == 0 || self.obs_y == 0 {
            return Err(Error::Config("observation grid must be nonempty".into()));
        }
        if !(self.noise_level >= 0.0 && self.misfit_weight >= 0.0) {
            return Err(Error::Config("noise level and misfit weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `h_theta(x, y) = 100 sum_{i,j=1..3} theta_{ij} sin(2 pi i x) sin(2 pi j y) / (i j)`,
/// with `theta_{ij}` stored at index `3 (i - 1) + (j - 1)`.
pub fn source_mode(t: usize, x: f64, y: f64) -> f64 {
    let i = (t / 3 + 1) as f64;
    let j = (t % 3 + 1) as f64;
    100.0 * (2.0 * PI * i * x).sin() * (2.0 * PI * j * y).sin() / (i * j)
}

pub fn boundary_value(x: f64, y: f64) -> f64 {
    if y < 0.5 {
        (4.0 * PI * x).cos()
    } else {
        (2.0 * PI * x).sin()
    }
}

/// Default truth field: one positive and one negative Gaussian bump.
pub fn two_bump(x: f64, y: f64) -> f64 {
    let g = |cx: f64, cy: f64, s: f64| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp();
    g(0.3, 0.65, 0.12) - 0.8 * g(0.7, 0.3, 0.15)
}

/// `(theta_bar, theta_bar + alpha e)` with `theta_bar = e_1`.
pub fn theta_paths_for_experiments(alpha: f64) -> (Vector, Vector) {
    let bar = Vector::basis(THETA_DIM, 0);
    let mut tilde = bar.clone();
    for v in tilde.iter_mut() {
        *v += alpha;
    }
    (bar, tilde)
}

pub fn theta_truth() -> Vector {
    theta_paths_for_experiments(0.25).1
}

/// `R = S^2` with `S = sqrt(hx hy) gamma (kappa L + I)` and
/// `L = M^{-1/2} K M^{-1/2}`, where `K` is the unit-coefficient Neumann
/// stiffness on all nodes and `M` the lumped areas.
pub struct PoissonRegularization {
    a: SymBandMatrix,
    chol: BandCholesky,
    scale: f64,
}

impl PoissonRegularization {
    pub fn new(grid: &Grid, kappa: f64, gamma: f64) -> Result<Self> {
        let n = grid.nodes();
        let mut a = SymBandMatrix::zeros(n, grid.nx + 1);
        let ar = grid.areas();
        for i in 0..n {
            a.add(i, i, 1.0);
        }
        for f in grid.faces() {
            let v = kappa * f.weight;
            a.add(f.a, f.a, v / ar[f.a]);
            a.add(f.b, f.b, v / ar[f.b]);
            a.add(f.a, f.b, -v / (ar[f.a] * ar[f.b]).sqrt());
        }
        let chol = a.cholesky()?;
        Ok(Self {
            a,
            chol,
            scale: (grid.hx * grid.hy).sqrt() * gamma,
        })
    }
}

impl Regularization for PoissonRegularization {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn apply(&self, v: &Vector) -> Result<Vector> {
        let s = self.sqrt_apply(v)?;
        self.sqrt_apply(&s)
    }
    fn solve(&self, v: &Vector) -> Result<Vector> {
        let s = self.sqrt_solve(v)?;
        self.sqrt_solve(&s)
    }
    fn sqrt_apply(&self, v: &Vector) -> Result<Vector> {
        v.check_dim(self.dim())?;
        let mut out = Vector::from_raw(self.a.matvec(v));
        out.scale(self.scale);
        Ok(out)
    }
    fn sqrt_solve(&self, v: &Vector) -> Result<Vector> {
        v.check_dim(self.dim())?;
        let mut out = Vector::from_raw(self.chol.solve(v));
        out.scale(1.0 / self.scale);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub y: Vec<f64>,
    pub points: Vec<(f64, f64)>,
    pub theta_truth: Vec<f64>,
    pub m_truth: String,
    pub noise_level: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub fine_nx: usize,
    pub fine_ny: usize,
}

/// Solves on a mesh refined `cfg.refinement` times, interpolates to the
/// observation points, and adds Gaussian noise with
/// `sigma = noise_level * max |d|`.
pub fn generate_synthetic_data(
    cfg: &PoissonConfig,
    m_truth: &dyn Fn(f64, f64) -> f64,
    m_truth_name: &str,
    theta: &Vector,
) -> Result<SyntheticDataset> {
    cfg.validate()?;
    theta.check_dim(THETA_DIM)?;
    let fine = Grid::new(cfg.nx * cfg.refinement, cfg.ny * cfg.refinement);
    let load = fine.lumped(|x, y| (0..THETA_DIM).map(|t| theta[t] * source_mode(t, x, y)).sum());
    let u = fine.solve(&fine.nodal(m_truth), &load, &fine.nodal(boundary_value))?;
    let interp = Interpolator::uniform_interior(&fine, cfg.obs_x, cfg.obs_y);
    let clean = interp.apply(&u);
    let sigma = cfg.noise_level * clean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y = clean
        .iter()
        .map(|d| {
            let e: f64 = StandardNormal.sample(&mut rng);
            d + sigma * e
        })
        .collect();
    Ok(SyntheticDataset {
        y,
        points: interp.points().to_vec(),
        theta_truth: theta.to_vec(),
        m_truth: m_truth_name.to_string(),
        noise_level: cfg.noise_level,
        noise_sigma: sigma,
        seed: cfg.seed,
        fine_nx: fine.nx,
        fine_ny: fine.ny,
    })
}

pub struct PoissonFactor {
    chol: BandCholesky,
    k: Vec<f64>,
}

pub struct PoissonModel {
    cfg: PoissonConfig,
    grid: Grid,
    reg: Arc<PoissonRegularization>,
    interp: Interpolator,
    data: SyntheticDataset,
    loads: Vec<Vec<f64>>,
    boundary: Vec<f64>,
}

impl PoissonModel {
    /// Model with data generated from the two-bump truth at `theta_truth()`.
    pub fn new(cfg: PoissonConfig) -> Result<Self> {
        let data = generate_synthetic_data(&cfg, &two_bump, "two_bump", &theta_truth())?;
        Self::with_dataset(cfg, data)
    }

    pub fn with_dataset(cfg: PoissonConfig, data: SyntheticDataset) -> Result<Self> {
        cfg.validate()?;
        if data.y.len() != data.points.len() {
            return Err(Error::DimensionMismatch {
                expected: data.points.len(),
                actual: data.y.len(),
            });
        }
        let grid = Grid::new(cfg.nx, cfg.ny);
        let reg = Arc::new(PoissonRegularization::new(&grid, cfg.kappa, cfg.gamma)?);
        let interp = Interpolator::new(&grid, data.points.clone());
        let loads = (0..THETA_DIM)
            .map(|t| grid.lumped(|x, y| source_mode(t, x, y)))
            .collect();
        let boundary = grid.boundary_only(&grid.nodal(boundary_value));
        Ok(Self {
            cfg,
            grid,
            reg,
            interp,
            data,
            loads,
            boundary,
        })
    }

    pub fn into_problem(self) -> AdjointProblem<Self> {
        AdjointProblem::new(self)
    }

    pub fn config(&self) -> &PoissonConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dataset(&self) -> &SyntheticDataset {
        &self.data
    }

    fn load(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.nodes()];
        for (t, basis) in theta.iter().zip(&self.loads) {
            for (o, b) in out.iter_mut().zip(basis) {
                *o += t * b;
            }
        }
        out
    }

    fn full_state(&self, u: &Vector) -> Vec<f64> {
        self.grid.extend(u, &self.boundary)
    }

    fn full_increment(&self, v: &Vector) -> Vec<f64> {
        self.grid.extend(v, &vec![0.0; self.grid.nodes()])
    }

    /// State including Dirichlet values, at `(m, theta)`.
    pub fn solve_full(&self, m: &Vector, theta: &Vector) -> Result<Vector> {
        let u = self.solve_state(m, theta)?;
        Ok(Vector::from_raw(self.full_state(&u)))
    }

    pub fn observe(&self, u_full: &[f64]) -> Vec<f64> {
        self.interp.apply(u_full)
    }

    fn misfit_residual(&self, u: &Vector) -> Vec<f64> {
        self.interp
            .apply(&self.full_state(u))
            .iter()
            .zip(&self.data.y)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Per node: `sum_f e^{m_node} / 2 * w_f (a_a - a_b)(b_a - b_b)`.
    fn face_products(&self, m: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.nodes()];
        for f in self.grid.faces() {
            let s = 0.5 * f.weight * (a[f.a] - a[f.b]) * (b[f.a] - b[f.b]);
            out[f.a] += m[f.a].exp() * s;
            out[f.b] += m[f.b].exp() * s;
        }
        out
    }

    fn perturbed_coefficients(&self, m: &[f64], p: &[f64]) -> Vec<f64> {
        self.grid
            .faces()
            .iter()
            .map(|f| 0.5 * (m[f.a].exp() * p[f.a] + m[f.b].exp() * p[f.b]))
            .collect()
    }
}

impl ResidualContract for PoissonModel {
    type Factor = PoissonFactor;

    fn state_dim(&self) -> usize {
        self.grid.free_nodes()
    }
    fn param_dim(&self) -> usize {
        self.grid.nodes()
    }
    fn theta_dim(&self) -> usize {
        THETA_DIM
    }

    fn residual(&self, u: &Vector, m: &Vector, theta: &Vector) -> Result<Vector> {
        let k = self.grid.face_coefficients(m);
        let div = self.grid.flux_divergence(&k, &self.full_state(u));
        let load = self.load(theta);
        let r: Vec<f64> = div.iter().zip(&load).map(|(a, b)| a - b).collect();
        Ok(Vector::from_raw(self.grid.restrict(&r)))
    }

    fn solve_state(&self, m: &Vector, theta: &Vector) -> Result<Vector> {
        let f = self.factor(&Vector::zeros(0), m, theta)?;
        let u = self.grid.solve_with(&f.chol, &f.k, &self.load(theta), &self.boundary);
        Vector::new(u).map_err(|_| Error::StateSolveFailure("non-finite state".into()))
    }

    fn factor(&self, _u: &Vector, m: &Vector, _theta: &Vector) -> Result<PoissonFactor> {
        m.check_dim(self.grid.nodes())?;
        let k = self.grid.face_coefficients(m);
        let chol = self
            .grid
            .stiffness_free(&k)
            .cholesky()
            .map_err(|e| Error::LinearSolveFailure(e.to_string()))?;
        Ok(PoissonFactor { chol, k })
    }

    fn jac_u_apply(&self, f: &PoissonFactor, x: &Vector) -> Result<Vector> {
        x.check_dim(self.state_dim())?;
        let div = self.grid.flux_divergence(&f.k, &self.full_increment(x));
        Ok(Vector::from_raw(self.grid.restrict(&div)))
    }

    fn jac_u_solve(&self, f: &PoissonFactor, rhs: &Vector) -> Result<Vector> {
        rhs.check_dim(self.state_dim())?;
        Vector::new(f.chol.solve(rhs)).map_err(|_| Error::LinearSolveFailure("non-finite solve".into()))
    }

    fn jac_u_solve_transpose(&self, f: &PoissonFactor, rhs: &Vector) -> Result<Vector> {
        self.jac_u_solve(f, rhs)
    }

    fn jac_m_apply(&self, u: &Vector, m: &Vector, _theta: &Vector, p: &Vector) -> Result<Vector> {
        let kp = self.perturbed_coefficients(m, p);
        let div = self.grid.flux_divergence(&kp, &self.full_state(u));
        Ok(Vector::from_raw(self.grid.restrict(&div)))
    }

    fn jac_m_transpose(&self, u: &Vector, m: &Vector, _theta: &Vector, mu: &Vector) -> Result<Vector> {
        let out = self.face_products(m, &self.full_state(u), &self.full_increment(mu));
        Ok(Vector::from_raw(out))
    }

    fn jac_theta_apply(&self, _u: &Vector, _m: &Vector, _theta: &Vector, dtheta: &Vector) -> Result<Vector> {
        let load = self.load(dtheta);
        Ok(Vector::from_raw(self.grid.restrict(&load)).scaled(-1.0))
    }

    fn c_um(&self, _u: &Vector, m: &Vector, _theta: &Vector, lambda: &Vector, p: &Vector) -> Result<Vector> {
        let kp = self.perturbed_coefficients(m, p);
        let div = self.grid.flux_divergence(&kp, &self.full_increment(lambda));
        Ok(Vector::from_raw(self.grid.restrict(&div)))
    }

    fn c_mu(&self, _u: &Vector, m: &Vector, _theta: &Vector, lambda: &Vector, xi: &Vector) -> Result<Vector> {
        let out = self.face_products(m, &self.full_increment(xi), &self.full_increment(lambda));
        Ok(Vector::from_raw(out))
    }

    fn c_mm(&self, u: &Vector, m: &Vector, _theta: &Vector, lambda: &Vector, p: &Vector) -> Result<Vector> {
        let mut out = self.face_products(m, &self.full_state(u), &self.full_increment(lambda));
        for (o, pi) in out.iter_mut().zip(p.iter()) {
            *o *= pi;
        }
        Ok(Vector::from_raw(out))
    }

    fn misfit(&self, u: &Vector) -> Result<f64> {
        let r = self.misfit_residual(u);
        Ok(0.5 * self.cfg.misfit_weight * r.iter().map(|v| v * v).sum::<f64>())
    }

    fn misfit_grad_u(&self, u: &Vector) -> Result<Vector> {
        let r: Vec<f64> = self.misfit_residual(u).iter().map(|v| v * self.cfg.misfit_weight).collect();
        Ok(Vector::from_raw(self.grid.restrict(&self.interp.transpose(&r))))
    }

    fn misfit_hess_u(&self, _u: &Vector, xi: &Vector) -> Result<Vector> {
        let q: Vec<f64> = self
            .interp
            .apply(&self.full_increment(xi))
            .iter()
            .map(|v| v * self.cfg.misfit_weight)
            .collect();
        Ok(Vector::from_raw(self.grid.restrict(&self.interp.transpose(&q))))
    }

    fn regularization(&self) -> Arc<dyn Regularization> {
        self.reg.clone()
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetSidecar {
    theta_truth: Vec<f64>,
    m_truth: String,
    noise_level: f64,
    noise_sigma: f64,
    seed: u64,
    fine_nx: usize,
    fine_ny: usize,
}

impl SyntheticDataset {
    /// Writes `<stem>.csv` (index, x, y, value) and `<stem>.json`.
    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(stem.with_extension("csv")).map_err(io_err)?;
        w.write_record(["index", "x", "y", "value"]).map_err(io_err)?;
        for (k, ((x, y), v)) in self.points.iter().zip(&self.y).enumerate() {
            w.write_record([k.to_string(), x.to_string(), y.to_string(), v.to_string()])
                .map_err(io_err)?;
        }
        w.flush()?;
        let side = DatasetSidecar {
            theta_truth: self.theta_truth.clone(),
            m_truth: self.m_truth.clone(),
            noise_level: self.noise_level,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            fine_nx: self.fine_nx,
            fine_ny: self.fine_ny,
        };
        let json = serde_json::to_string_pretty(&side).map_err(io_err)?;
        std::fs::write(stem.with_extension("json"), json)?;
        Ok(())
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(stem.with_extension("csv")).map_err(io_err)?;
        let mut points = Vec::new();
        let mut y = Vec::new();
        for rec in r.deserialize() {
            let (_, x, yy, v): (usize, f64, f64, f64) = rec.map_err(io_err)?;
            points.push((x, yy));
            y.push(v);
        }
        let text = std::fs::read_to_string(stem.with_extension("json"))?;
        let side: DatasetSidecar = serde_json::from_str(&text).map_err(io_err)?;
        Ok(Self {
            y,
            points,
            theta_truth: side.theta_truth,
            m_truth: side.m_truth,
            noise_level: side.noise_level,
            noise_sigma: side.noise_sigma,
            seed: side.seed,
            fine_nx: side.fine_nx,
            fine_ny: side.fine_ny,
        })
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}
