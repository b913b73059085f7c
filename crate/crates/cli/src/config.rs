use std::path::{Path, PathBuf};

use ptcont_core::continuation::{ContinuationConfig, NewtonConfig, Predictor};
use ptcont_core::models::PoissonConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Which objective a sweep runs on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `J(m, theta) = (m - theta)^6 + 0.01 m^2`; the path runs from
    /// `theta_bar` to `theta_bar + alpha`.
    Illustrative {
        #[serde(default = "one")]
        theta_bar: f64,
    },
    /// Poisson log-diffusivity inversion; the path runs from `e_1` to
    /// `e_1 + alpha (1, ..., 1)`.
    Poisson(PoissonConfig),
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::Illustrative { .. } => "illustrative",
            ModelSpec::Poisson(_) => "poisson",
        }
    }
}

/// Sweep axes; cells are their Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub alpha: Vec<f64>,
    pub predictor: Vec<Predictor>,
    pub n_steps: Vec<usize>,
    pub eps_cg: Vec<f64>,
    /// `(r_init, r_update)` pairs.
    pub ranks: Vec<(usize, usize)>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            alpha: vec![0.1, 0.2, 0.3],
            predictor: vec![Predictor::ForwardEuler, Predictor::ModifiedEuler],
            n_steps: (2..=9).collect(),
            eps_cg: vec![1e-4],
            ranks: vec![(0, 20)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed for the randomized preconditioner initialization.
    #[serde(default)]
    pub seed: u64,
    /// Also run warm-started Newton re-optimization once per `alpha`.
    #[serde(default = "yes")]
    pub baseline: bool,
    /// Settings shared by every cell; sweep axes override their fields.
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn yes() -> bool {
    true
}

/// One point of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub alpha: f64,
    pub predictor: Predictor,
    pub n_steps: usize,
    pub eps_cg: f64,
    pub r_init: usize,
    pub r_update: usize,
}

impl Cell {
    pub fn name(&self) -> String {
        let p = match self.predictor {
            Predictor::ForwardEuler => "fe",
            Predictor::ModifiedEuler => "me",
        };
        format!(
            "cell{:03}_a{}_{p}_n{}_eps{:e}_r{}-{}",
            self.index, self.alpha, self.n_steps, self.eps_cg, self.r_init, self.r_update
        )
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.alpha.is_empty() || s.predictor.is_empty() || s.n_steps.is_empty() || s.eps_cg.is_empty() || s.ranks.is_empty()
        {
            return Err(CliError::Config("every sweep axis needs at least one value".into()));
        }
        if s.alpha.iter().any(|a| !a.is_finite()) {
            return Err(CliError::Config("alpha values must be finite".into()));
        }
        if let ModelSpec::Poisson(p) = &self.model {
            p.validate()?;
        }
        for cell in self.cells() {
            self.continuation_for(&cell).validate()?;
        }
        if !(self.newton.grad_tol > 0.0 && self.newton.eps_cg > 0.0 && self.newton.eps_cg < 1.0) {
            return Err(CliError::Config("newton grad_tol and eps_cg must lie in (0, 1)".into()));
        }
        if self.newton.weights != self.continuation.weights {
            return Err(CliError::Config("continuation and newton cost weights differ".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let s = &self.sweep;
        let mut out = Vec::new();
        for &alpha in &s.alpha {
            for &predictor in &s.predictor {
                for &n_steps in &s.n_steps {
                    for &eps_cg in &s.eps_cg {
                        for &(r_init, r_update) in &s.ranks {
                            out.push(Cell {
                                index: out.len(),
                                alpha,
                                predictor,
                                n_steps,
                                eps_cg,
                                r_init,
                                r_update,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn continuation_for(&self, cell: &Cell) -> ContinuationConfig {
        ContinuationConfig {
            n_steps: cell.n_steps,
            predictor: cell.predictor,
            eps_cg: cell.eps_cg,
            r_init: cell.r_init,
            r_update: cell.r_update,
            seed: self.seed,
            ..self.continuation.clone()
        }
    }
}
