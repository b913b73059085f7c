//! Derivative and invariant checks behind `ptcont check`.

use ptcont_core::adjoint::fd;
use ptcont_core::continuation::{minimize, run_continuation, ContinuationConfig, CostLedger, Predictor};
use ptcont_core::linalg::{seeded_gaussian, Vector};
use ptcont_core::models::{theta_paths_for_experiments, Illustrative1D, PoissonConfig, PoissonModel, THETA_DIM};
use ptcont_core::precond::{min_rayleigh_quotient, operator_scale, symmetry_defect};
use ptcont_core::problem::Problem;
use ptcont_core::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn result(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((pass, detail)) => CheckResult { name, pass, detail },
        Err(e) => CheckResult {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs the suite on the illustrative objective and a 10x10 Poisson instance.
pub fn run_checks() -> Vec<CheckResult> {
    let poisson = PoissonModel::new(PoissonConfig::with_mesh(10)).map(|m| m.into_problem());
    let mut out = vec![result("illustrative derivatives", illustrative())];
    match &poisson {
        Ok(p) => {
            out.push(result("poisson derivatives", derivatives(p)));
            out.push(result("regularization operator", regularization(p)));
            out.push(result("preconditioner invariants and ledger", continuation(p)));
        }
        Err(e) => out.push(CheckResult {
            name: "poisson model",
            pass: false,
            detail: format!("error: {e}"),
        }),
    }
    out
}

fn illustrative() -> Result<(bool, String)> {
    let p = Illustrative1D;
    let mut worst = 0f64;
    for k in 0..20u64 {
        let s = seeded_gaussian(2, k);
        let m = Vector::new(vec![0.5 * s[0]])?;
        let theta = Vector::new(vec![1.0 + 0.5 * s[1]])?;
        let one = Vector::new(vec![1.0])?;
        worst = worst
            .max(fd::gradient_error(&p, &m, &theta, &one, 1e-5)?)
            .max(fd::hessian_error(&p, &m, &theta, &one, 1e-5)?)
            .max(fd::mixed_error(&p, &m, &theta, &one, 1e-5)?);
    }
    Ok((worst <= 1e-6, format!("max rel err {worst:.1e} over 20 points")))
}

fn derivatives(p: &dyn Problem) -> Result<(bool, String)> {
    let m = seeded_gaussian(p.dim(), 31).scaled(0.3);
    let (theta, _) = theta_paths_for_experiments(0.0);
    let lin = p.linearize(&m, &theta)?;
    let h = fd::DEFAULT_STEP;
    let (mut eg, mut eb, mut eh, mut asym) = (0f64, 0f64, 0f64, 0f64);
    for k in 0..5 {
        let d = seeded_gaussian(p.dim(), 100 + k);
        let dt = seeded_gaussian(THETA_DIM, 200 + k);
        let q = seeded_gaussian(p.dim(), 300 + k);
        eg = eg.max(fd::gradient_error(p, &m, &theta, &d, h)?);
        eb = eb.max(fd::mixed_error(p, &m, &theta, &dt, h)?);
        eh = eh.max(fd::hessian_error(p, &m, &theta, &d, h)?);
        asym = asym.max(fd::hessian_asymmetry(lin.as_ref(), &d, &q)?);
    }
    Ok((
        eg <= 1e-5 && eb <= 1e-5 && eh <= 1e-5 && asym <= 1e-10,
        format!("rel err gradient {eg:.1e}, B {eb:.1e}, Hp {eh:.1e}; asymmetry {asym:.1e}"),
    ))
}

fn regularization(p: &dyn Problem) -> Result<(bool, String)> {
    let reg = p.regularization();
    let mut spd = true;
    let (mut inv, mut sq) = (0f64, 0f64);
    for k in 0..20 {
        let v = seeded_gaussian(reg.dim(), 500 + k);
        let rv = reg.apply(&v)?;
        spd &= v.dot(&rv) > 0.0;
        inv = inv.max(reg.apply(&reg.solve(&v)?)?.sub(&v).norm() / v.norm());
        sq = sq.max(reg.sqrt_apply(&reg.sqrt_apply(&v)?)?.sub(&rv).norm() / rv.norm());
    }
    Ok((
        spd && inv <= 1e-8 && sq <= 1e-10,
        format!("positive: {spd}; R R^-1 rel err {inv:.1e}; (R^1/2)^2 rel err {sq:.1e}"),
    ))
}

fn continuation(p: &dyn Problem) -> Result<(bool, String)> {
    let (tb, tt) = theta_paths_for_experiments(0.2);
    let m0 = minimize(p, &tb, &Vector::zeros(p.dim()), 1e-8)?;
    let cfg = ContinuationConfig {
        n_steps: 2,
        predictor: Predictor::ModifiedEuler,
        r_init: 4,
        audit_probes: 20,
        ..ContinuationConfig::default()
    };
    let run = run_continuation(p, &tb, &tt, &m0, &cfg)?;
    if let Some(e) = run.error {
        return Ok((false, format!("run failed: {e}")));
    }
    let audits: Vec<_> = run.trace.steps.iter().flat_map(|s| &s.audits).collect();
    let secant = audits.iter().map(|a| a.secant_residual).fold(0.0, f64::max);
    let sym = audits.iter().map(|a| a.symmetry_defect).fold(0.0, f64::max);
    let rayleigh = audits.iter().map(|a| a.min_rayleigh).fold(f64::INFINITY, f64::min);
    let e = &run.preconditioner;
    let final_sym = symmetry_defect(e, 20, 7, operator_scale(e, 20, 7)?)?;
    let final_rq = min_rayleigh_quotient(e, 100, 9)?;
    let replay = CostLedger::replay(run.trace.config.weights, &run.trace.events) == run.trace.cost;
    Ok((
        !audits.is_empty() && secant <= 1e-8 && sym.max(final_sym) <= 1e-10 && rayleigh.min(final_rq) > 0.0 && replay,
        format!(
            "{} updates: secant {secant:.1e}, symmetry {:.1e}, min Rayleigh {:.1e}; ledger replay {}",
            audits.len(),
            sym.max(final_sym),
            rayleigh.min(final_rq),
            if replay { "exact" } else { "MISMATCH" }
        ),
    ))
}
