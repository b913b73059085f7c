use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ptcont_core::continuation::{
    minimize, newton_reoptimize, run_continuation, ContinuationTrace, CostLedger, NewtonConfig, NewtonResult,
};
use ptcont_core::linalg::Vector;
use ptcont_core::models::{theta_paths_for_experiments, Illustrative1D, PoissonModel};
use ptcont_core::problem::Problem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, ExperimentConfig, ModelSpec};
use crate::error::{CliError, Result};

pub const THREADS_ENV: &str = "PTCONT_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Continuation,
    Newton,
}

/// Outcome of one sweep cell or one baseline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub method: Method,
    pub alpha: f64,
    /// Absent for baselines.
    pub cell: Option<Cell>,
    pub ledger: CostLedger,
    pub total_linear: u64,
    /// `H` products spent building a low-rank initial preconditioner, not in `ledger`.
    pub init_hess_applies: usize,
    pub stored_vectors: usize,
    pub converged: bool,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub trace_path: PathBuf,
}

/// Everything needed to rerun a cell and re-derive its report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceFile {
    pub model: ModelSpec,
    pub seed: u64,
    pub alpha: f64,
    pub cell: Option<Cell>,
    /// Gradient tolerance used to compute the starting minimizer.
    pub start_grad_tol: f64,
    pub newton_config: Option<NewtonConfig>,
    pub error: Option<String>,
    pub continuation: Option<ContinuationTrace>,
    pub newton: Option<NewtonResult>,
}

impl TraceFile {
    /// Ledger rebuilt from the recorded per-call charges.
    pub fn replayed_ledger(&self) -> Option<CostLedger> {
        if let Some(t) = &self.continuation {
            Some(CostLedger::replay(t.config.weights, &t.events))
        } else {
            self.newton.as_ref().map(|n| CostLedger::replay(n.ledger.weights, &n.events))
        }
    }

    /// Repeats the recorded run and returns its ledger.
    pub fn rerun(&self) -> Result<CostLedger> {
        let inst = Instance::build(&self.model, self.start_grad_tol)?;
        let (tb, tt) = inst.path(self.alpha)?;
        if let Some(t) = &self.continuation {
            let run = run_continuation(inst.problem.as_ref(), &tb, &tt, &inst.m_star_bar, &t.config)?;
            Ok(run.trace.cost)
        } else if let Some(cfg) = &self.newton_config {
            Ok(newton_reoptimize(inst.problem.as_ref(), &tt, &inst.m_star_bar, cfg)?.ledger)
        } else {
            Err(CliError::Config("trace holds no completed run".into()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Serialize(e.to_string()))
    }
}

/// A built model together with its nominal minimizer.
pub struct Instance {
    pub spec: ModelSpec,
    pub problem: Arc<dyn Problem>,
    pub m_star_bar: Vector,
}

impl Instance {
    pub fn build(spec: &ModelSpec, grad_tol: f64) -> Result<Self> {
        let problem: Arc<dyn Problem> = match spec {
            ModelSpec::Illustrative { .. } => Arc::new(Illustrative1D),
            ModelSpec::Poisson(cfg) => Arc::new(PoissonModel::new(cfg.clone())?.into_problem()),
        };
        let spec = spec.clone();
        let mut inst = Self {
            m_star_bar: Vector::zeros(problem.dim()),
            problem,
            spec,
        };
        let (theta_bar, _) = inst.path(0.0)?;
        inst.m_star_bar = minimize(inst.problem.as_ref(), &theta_bar, &inst.m_star_bar, grad_tol)?;
        Ok(inst)
    }

    /// `(theta_bar, theta_tilde)` for a perturbation of size `alpha`.
    pub fn path(&self, alpha: f64) -> Result<(Vector, Vector)> {
        Ok(match &self.spec {
            ModelSpec::Illustrative { theta_bar } => {
                (Vector::new(vec![*theta_bar])?, Vector::new(vec![theta_bar + alpha])?)
            }
            ModelSpec::Poisson(_) => theta_paths_for_experiments(alpha),
        })
    }
}

/// Worker count from `PTCONT_THREADS`; `None` leaves the choice to rayon.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

enum Job {
    Cell(Cell),
    Baseline(f64),
}

/// Runs every sweep cell (and the baselines when enabled), writing one
/// trace file per run under `<output_dir>/traces`. Cell failures are
/// recorded in their reports.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let traces = cfg.output_dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|e| CliError::io(&traces, e))?;
    let inst = Instance::build(&cfg.model, cfg.continuation.grad_tol)?;

    let mut jobs: Vec<Job> = cfg.cells().into_iter().map(Job::Cell).collect();
    if cfg.baseline {
        let mut alphas = cfg.sweep.alpha.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        jobs.extend(alphas.into_iter().map(Job::Baseline));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|job| run_job(cfg, &inst, &traces, job)).collect())
}

fn run_job(cfg: &ExperimentConfig, inst: &Instance, traces: &Path, job: &Job) -> Result<RunReport> {
    let start = Instant::now();
    let mut file = TraceFile {
        model: cfg.model.clone(),
        seed: cfg.seed,
        alpha: 0.0,
        cell: None,
        start_grad_tol: cfg.continuation.grad_tol,
        newton_config: None,
        error: None,
        continuation: None,
        newton: None,
    };
    let mut report = RunReport {
        model: cfg.model.id().to_string(),
        method: Method::Continuation,
        alpha: 0.0,
        cell: None,
        ledger: CostLedger::default(),
        total_linear: 0,
        init_hess_applies: 0,
        stored_vectors: 0,
        converged: false,
        error: None,
        wall_time_s: 0.0,
        trace_path: PathBuf::new(),
    };
    let name = match job {
        Job::Cell(cell) => {
            let (tb, tt) = inst.path(cell.alpha)?;
            let ccfg = cfg.continuation_for(cell);
            report.alpha = cell.alpha;
            report.cell = Some(cell.clone());
            file.alpha = cell.alpha;
            file.cell = Some(cell.clone());
            match run_continuation(inst.problem.as_ref(), &tb, &tt, &inst.m_star_bar, &ccfg) {
                Ok(run) => {
                    report.ledger = run.trace.cost.clone();
                    report.init_hess_applies = run.trace.init_hess_applies;
                    report.stored_vectors = run.preconditioner.stored_vector_count();
                    report.converged = run.trace.success;
                    report.error = run.trace.failure.clone();
                    file.continuation = Some(run.trace);
                }
                Err(e) => report.error = Some(e.to_string()),
            }
            cell.name()
        }
        Job::Baseline(alpha) => {
            let (_, tt) = inst.path(*alpha)?;
            report.method = Method::Newton;
            file.newton_config = Some(cfg.newton.clone());
            report.alpha = *alpha;
            file.alpha = *alpha;
            match newton_reoptimize(inst.problem.as_ref(), &tt, &inst.m_star_bar, &cfg.newton) {
                Ok(res) => {
                    report.ledger = res.ledger.clone();
                    report.converged = res.converged;
                    if !res.converged {
                        report.error = Some(format!("no convergence in {} iterations", res.iterations));
                    }
                    file.newton = Some(res);
                }
                Err(e) => report.error = Some(e.to_string()),
            }
            format!("baseline_a{alpha}")
        }
    };
    report.total_linear = report.ledger.total_linear_solves();
    report.wall_time_s = start.elapsed().as_secs_f64();
    file.error = report.error.clone();
    let path = traces.join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Serialize(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    report.trace_path = path;
    Ok(report)
}

/// Number of reports that did not converge.
pub fn failures(reports: &[RunReport]) -> usize {
    reports.iter().filter(|r| !r.converged).count()
}
