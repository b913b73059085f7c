//! Pseudo-time continuation along `theta(t) = theta_bar + t (theta_tilde - theta_bar)`.
//!
//! Each step runs a predictor (forward or modified Euler on
//! `dm/dt = -H^{-1} B dtheta`), a Newton corrector, and a tolerance loop,
//! with every Hessian inversion done by PCG against an adaptively updated
//! quasi-Newton preconditioner.

mod ledger;
mod newton;

pub use ledger::{CostKind, CostLedger, CostWeights, RecordingLedger};
pub use newton::{minimize, newton_reoptimize, NewtonConfig, NewtonResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{pcg_solve, PcgConfig, PcgResult, PcgStatus};
use crate::linalg::Vector;
use crate::precond::{init_lowrank_from, LowRankOptions, PreconditionerState, UpdateAudit, UpdateOutcome, DEFAULT_TAU};
use crate::problem::{HessianOperator, Linearization, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Predictor {
    ForwardEuler,
    ModifiedEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub n_steps: usize,
    pub predictor: Predictor,
    pub r_init: usize,
    pub r_update: usize,
    pub eps_cg: f64,
    pub tau_filter: f64,
    pub grad_tol: f64,
    pub skip_corrector_if_optimal: bool,
    pub max_tolsat_iters: usize,
    pub seed: u64,
    pub corrector: bool,
    pub tolerance_satisfaction: bool,
    pub tolsat_block_updates: bool,
    pub pcg_max_iter: usize,
    pub storage_cap: Option<usize>,
    pub weights: CostWeights,
    /// Random probes per invariant audit after each accepted update; 0 disables.
    pub audit_probes: usize,
    pub record_iterates: bool,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            n_steps: 3,
            predictor: Predictor::ModifiedEuler,
            r_init: 0,
            r_update: 20,
            eps_cg: 1e-2,
            tau_filter: DEFAULT_TAU,
            grad_tol: 1e-8,
            skip_corrector_if_optimal: true,
            max_tolsat_iters: 20,
            seed: 0,
            corrector: true,
            tolerance_satisfaction: true,
            tolsat_block_updates: true,
            pcg_max_iter: 500,
            storage_cap: None,
            weights: CostWeights::default(),
            audit_probes: 0,
            record_iterates: false,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if !(self.tau_filter >= 0.0) {
            return Err(Error::Config("tau_filter must be nonnegative".into()));
        }
        self.pcg().validate()
    }

    fn pcg(&self) -> PcgConfig {
        PcgConfig {
            eps_cg: self.eps_cg,
            max_iter: self.pcg_max_iter,
            record_pairs: self.r_update > 0,
            record_cap: self.r_update,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    PredictorHalf,
    Predictor,
    Corrector,
    Tolsat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub phase: Phase,
    pub iters: usize,
    pub converged: bool,
    pub block_update: UpdateOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub theta: Vec<f64>,
    /// Gradient norm at `(m_pred, theta_k)`.
    pub grad_after_predictor: f64,
    pub grad_after_corrector: Option<f64>,
    pub grad_after_tolsat: f64,
    pub solves: Vec<SolveRecord>,
    pub parametric_update: UpdateOutcome,
    pub corrector_skipped: bool,
    pub tolsat_iters: usize,
    pub ledger_len: usize,
    pub stored_vectors: usize,
    pub cost_total: u64,
    pub audits: Vec<UpdateAudit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_pred: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_corr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_next: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationTrace {
    pub config: ContinuationConfig,
    pub initial_grad_norm: f64,
    pub steps: Vec<StepRecord>,
    pub m_final: Vec<f64>,
    pub cost: CostLedger,
    pub events: Vec<(CostKind, u64)>,
    /// Misfit-Hessian products spent building a low-rank start; not in `cost`.
    pub init_hess_applies: usize,
    pub success: bool,
    pub failure: Option<String>,
}

impl ContinuationTrace {
    pub fn hessian_solves(&self) -> usize {
        self.steps.iter().map(|s| s.solves.len()).sum()
    }

    pub fn pcg_iterations(&self) -> usize {
        self.steps.iter().flat_map(|s| &s.solves).map(|s| s.iters).sum()
    }
}

pub struct ContinuationRun {
    pub m_final: Vector,
    pub trace: ContinuationTrace,
    pub preconditioner: PreconditionerState,
    pub error: Option<Error>,
}

impl ContinuationRun {
    pub fn into_result(self) -> Result<(Vector, ContinuationTrace)> {
        match self.error {
            Some(e) => Err(e),
            None => Ok((self.m_final, self.trace)),
        }
    }
}

/// Shared machinery for the step phases: the preconditioner, cost ledger,
/// and audit settings of one run.
pub struct Stepper<'p> {
    pub problem: &'p dyn Problem,
    pub cfg: ContinuationConfig,
    pub e: PreconditionerState,
    pub cost: RecordingLedger,
    pcg: PcgConfig,
    audit_counter: u64,
}

pub struct PredictorOutput {
    pub m_pred: Vector,
    pub g_pred: Vector,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p dyn Problem, cfg: ContinuationConfig, e: PreconditionerState) -> Result<Self> {
        cfg.validate()?;
        let e = match cfg.storage_cap {
            Some(cap) => e.with_storage_cap(cap),
            None => e,
        };
        Ok(Self {
            problem,
            pcg: cfg.pcg(),
            cfg,
            e,
            cost: RecordingLedger::new(CostWeights::default()),
            audit_counter: 0,
        }
        .with_weights())
    }

    fn with_weights(mut self) -> Self {
        self.cost = RecordingLedger::new(self.cfg.weights);
        self
    }

    pub fn linearize(&mut self, m: &Vector, theta: &Vector) -> Result<Box<dyn Linearization + 'p>> {
        let lin = self.problem.linearize(m, theta)?;
        self.cost.charge(CostKind::State, 1);
        self.cost.charge(CostKind::Gradient, 1);
        Ok(lin)
    }

    pub fn mixed(&mut self, lin: &dyn Linearization, dtheta: &Vector) -> Result<Vector> {
        let b = lin.mixed_apply(dtheta)?;
        self.cost.charge(CostKind::B, 1);
        Ok(b)
    }

    /// PCG on `H x = rhs` with the current preconditioner, optionally
    /// followed by a block update from the recorded pairs.
    pub fn solve(
        &mut self,
        lin: &dyn Linearization,
        rhs: &Vector,
        phase: Phase,
        update: bool,
        rec: &mut Vec<SolveRecord>,
        audits: &mut Vec<UpdateAudit>,
    ) -> Result<Vector> {
        let op = HessianOperator::new(lin, self.problem.dim());
        let res: PcgResult = pcg_solve(&op, rhs, &self.e, &self.pcg)?;
        self.cost.charge(CostKind::H, res.applies as u64);
        if let PcgStatus::IndefiniteCurvature { iteration, curvature } = res.status {
            return Err(Error::IndefiniteCurvature { iteration, curvature });
        }
        let outcome = if update {
            self.e
                .block_update(&res.pairs_p, &res.pairs_w, self.cfg.tau_filter, self.cfg.r_update)?
        } else {
            UpdateOutcome::Unchanged
        };
        self.audit(outcome, audits)?;
        rec.push(SolveRecord {
            phase,
            iters: res.iters,
            converged: res.converged(),
            block_update: outcome,
        });
        Ok(res.x)
    }

    fn audit(&mut self, outcome: UpdateOutcome, audits: &mut Vec<UpdateAudit>) -> Result<()> {
        if self.cfg.audit_probes == 0 || !matches!(outcome, UpdateOutcome::Applied { .. }) {
            return Ok(());
        }
        self.audit_counter += 1;
        let seed = self.cfg.seed.wrapping_mul(7919).wrapping_add(self.audit_counter * 1000);
        if let Some(a) = UpdateAudit::latest(&self.e, self.cfg.audit_probes, seed)? {
            audits.push(a);
        }
        Ok(())
    }

    /// `m_pred = m_k - H_k^{-1} (dt B_k dtheta)`.
    pub fn predictor_fe(
        &mut self,
        lin_k: &dyn Linearization,
        m_k: &Vector,
        dtheta: &Vector,
        dt: f64,
        rec: &mut Vec<SolveRecord>,
        audits: &mut Vec<UpdateAudit>,
    ) -> Result<PredictorOutput> {
        let g_pred = self.mixed(lin_k, dtheta)?.scaled(dt);
        let s = self.solve(lin_k, &g_pred, Phase::Predictor, true, rec, audits)?;
        Ok(PredictorOutput {
            m_pred: m_k.sub(&s),
            g_pred,
        })
    }

    /// Half step to `t_k + dt/2`, then a full step from `m_k` with the slope
    /// evaluated at the half-step point.
    #[allow(clippy::too_many_arguments)]
    pub fn predictor_me(
        &mut self,
        lin_k: &dyn Linearization,
        m_k: &Vector,
        theta_half: &Vector,
        dtheta: &Vector,
        dt: f64,
        rec: &mut Vec<SolveRecord>,
        audits: &mut Vec<UpdateAudit>,
    ) -> Result<PredictorOutput> {
        let b_k = self.mixed(lin_k, dtheta)?;
        let s_half = self.solve(lin_k, &b_k.scaled(0.5 * dt), Phase::PredictorHalf, true, rec, audits)?;
        let m_half = m_k.sub(&s_half);
        let lin_half = self.linearize(&m_half, theta_half)?;
        let b_half = self.mixed(lin_half.as_ref(), dtheta)?;
        let s = self.solve(lin_half.as_ref(), &b_half.scaled(dt), Phase::Predictor, true, rec, audits)?;
        Ok(PredictorOutput {
            m_pred: m_k.sub(&s),
            g_pred: b_k.scaled(dt),
        })
    }

    /// One Newton step at the predicted point unless it is already optimal.
    /// Returns `None` when skipped.
    pub fn corrector(
        &mut self,
        lin_pred: &dyn Linearization,
        m_pred: &Vector,
        rec: &mut Vec<SolveRecord>,
        audits: &mut Vec<UpdateAudit>,
    ) -> Result<Option<Vector>> {
        let g = lin_pred.gradient();
        if self.cfg.skip_corrector_if_optimal && g.norm() <= self.cfg.grad_tol {
            return Ok(None);
        }
        let s = self.solve(lin_pred, g, Phase::Corrector, true, rec, audits)?;
        Ok(Some(m_pred.sub(&s)))
    }

    /// Newton iterations until `|g| <= grad_tol`.
    pub fn tolerance_satisfaction(
        &mut self,
        mut m: Vector,
        mut lin: Box<dyn Linearization + 'p>,
        theta: &Vector,
        rec: &mut Vec<SolveRecord>,
        audits: &mut Vec<UpdateAudit>,
    ) -> Result<(Vector, Box<dyn Linearization + 'p>, usize)> {
        let mut iters = 0;
        while lin.gradient().norm() > self.cfg.grad_tol {
            if iters == self.cfg.max_tolsat_iters {
                return Err(Error::TolsatStall {
                    iterations: iters,
                    grad_norm: lin.gradient().norm(),
                });
            }
            let g = lin.gradient().clone();
            let update = self.cfg.tolsat_block_updates;
            let s = self.solve(lin.as_ref(), &g, Phase::Tolsat, update, rec, audits)?;
            m = m.sub(&s);
            lin = self.linearize(&m, theta)?;
            iters += 1;
        }
        Ok((m, lin, iters))
    }
}

fn theta_at(theta_bar: &Vector, dtheta: &Vector, t: f64) -> Vector {
    let mut th = theta_bar.clone();
    th.axpy(t, dtheta);
    th
}

/// Runs the continuation from a minimizer `m_star_bar` at `theta_bar` to
/// `theta_tilde`. Failures during the run are reported in the returned
/// trace together with the last accepted iterate.
pub fn run_continuation(
    problem: &dyn Problem,
    theta_bar: &Vector,
    theta_tilde: &Vector,
    m_star_bar: &Vector,
    cfg: &ContinuationConfig,
) -> Result<ContinuationRun> {
    cfg.validate()?;
    m_star_bar.check_dim(problem.dim())?;
    theta_bar.check_dim(problem.theta_dim())?;
    theta_tilde.check_dim(problem.theta_dim())?;

    let base = PreconditionerState::from_regularization(problem.regularization());
    let mut stepper = Stepper::new(problem, cfg.clone(), base)?;
    let lin0 = stepper.linearize(m_star_bar, theta_bar)?;
    let g0 = lin0.gradient().norm();
    if g0 > cfg.grad_tol {
        return Err(Error::Config(format!(
            "start point has gradient norm {g0:e}, above grad_tol {:e}",
            cfg.grad_tol
        )));
    }
    let mut init_hess_applies = 0;
    if cfg.r_init > 0 {
        let (e, report) = init_lowrank_from(
            lin0.as_ref(),
            problem.regularization(),
            cfg.r_init,
            cfg.seed,
            LowRankOptions::default(),
        )?;
        init_hess_applies = report.hess_applies;
        stepper.e = match cfg.storage_cap {
            Some(cap) => e.with_storage_cap(cap),
            None => e,
        };
    }

    let mut trace = ContinuationTrace {
        config: cfg.clone(),
        initial_grad_norm: g0,
        steps: Vec::with_capacity(cfg.n_steps),
        m_final: m_star_bar.to_vec(),
        cost: CostLedger::default(),
        events: Vec::new(),
        init_hess_applies,
        success: false,
        failure: None,
    };
    let mut m = m_star_bar.clone();
    let result = march(&mut stepper, &mut trace, &mut m, lin0, theta_bar, theta_tilde);
    trace.m_final = m.to_vec();
    trace.cost = stepper.cost.ledger.clone();
    trace.events = stepper.cost.events.clone();
    let error = result.err();
    trace.success = error.is_none();
    trace.failure = error.as_ref().map(|e| e.to_string());
    Ok(ContinuationRun {
        m_final: m,
        trace,
        preconditioner: stepper.e,
        error,
    })
}

fn march<'p>(
    st: &mut Stepper<'p>,
    trace: &mut ContinuationTrace,
    m: &mut Vector,
    lin0: Box<dyn Linearization + 'p>,
    theta_bar: &Vector,
    theta_tilde: &Vector,
) -> Result<()> {
    let n = st.cfg.n_steps;
    let dt = 1.0 / n as f64;
    let dtheta = theta_tilde.sub(theta_bar);
    let record = st.cfg.record_iterates;
    let mut lin = lin0;
    for k in 0..n {
        let theta_next = if k + 1 == n {
            theta_tilde.clone()
        } else {
            theta_at(theta_bar, &dtheta, (k + 1) as f64 * dt)
        };
        let mut solves = Vec::new();
        let mut audits = Vec::new();

        let g_k = lin.gradient().clone();
        let pred = match st.cfg.predictor {
            Predictor::ForwardEuler => st.predictor_fe(lin.as_ref(), m, &dtheta, dt, &mut solves, &mut audits)?,
            Predictor::ModifiedEuler => {
                let theta_half = theta_at(theta_bar, &dtheta, (k as f64 + 0.5) * dt);
                st.predictor_me(lin.as_ref(), m, &theta_half, &dtheta, dt, &mut solves, &mut audits)?
            }
        };

        let lin_pred = st.linearize(&pred.m_pred, &theta_next)?;
        let grad_after_predictor = lin_pred.gradient().norm();
        let parametric_update = st
            .e
            .parametric_update(m, &pred.m_pred, &g_k, lin_pred.gradient(), &pred.g_pred)?;
        st.audit(parametric_update, &mut audits)?;

        let mut m_next = pred.m_pred.clone();
        let mut lin_next = lin_pred;
        let mut corrector_skipped = false;
        let mut m_corr = None;
        let mut grad_after_corrector = None;
        if st.cfg.corrector {
            match st.corrector(lin_next.as_ref(), &pred.m_pred, &mut solves, &mut audits)? {
                Some(mc) => {
                    lin_next = st.linearize(&mc, &theta_next)?;
                    grad_after_corrector = Some(lin_next.gradient().norm());
                    if record {
                        m_corr = Some(mc.to_vec());
                    }
                    m_next = mc;
                }
                None => corrector_skipped = true,
            }
        }

        let mut tolsat_iters = 0;
        if st.cfg.tolerance_satisfaction {
            let (mt, lt, it) = st.tolerance_satisfaction(m_next, lin_next, &theta_next, &mut solves, &mut audits)?;
            m_next = mt;
            lin_next = lt;
            tolsat_iters = it;
        }

        trace.steps.push(StepRecord {
            k: k + 1,
            t: (k + 1) as f64 * dt,
            theta: theta_next.to_vec(),
            grad_after_predictor,
            grad_after_corrector,
            grad_after_tolsat: lin_next.gradient().norm(),
            solves,
            parametric_update,
            corrector_skipped,
            tolsat_iters,
            ledger_len: st.e.ledger().len(),
            stored_vectors: st.e.stored_vector_count(),
            cost_total: st.cost.ledger.total_linear_solves(),
            audits,
            m_pred: record.then(|| pred.m_pred.to_vec()),
            m_corr,
            m_next: record.then(|| m_next.to_vec()),
        });
        *m = m_next;
        lin = lin_next;
    }
    Ok(())
}
