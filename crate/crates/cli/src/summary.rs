use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ptcont_core::continuation::Predictor;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::runner::{Method, RunReport};

#[derive(Serialize)]
struct Row<'a> {
    model: &'a str,
    alpha: f64,
    predictor: &'a str,
    #[serde(rename = "N")]
    n: Option<usize>,
    eps_cg: Option<f64>,
    r_init: Option<usize>,
    r_update: Option<usize>,
    state_solves: u64,
    grad_evals: u64,
    b_applies: u64,
    h_applies: u64,
    total_linear: u64,
    stored_vectors: usize,
    converged: bool,
}

fn predictor_name(r: &RunReport) -> &'static str {
    match (&r.method, r.cell.as_ref().map(|c| c.predictor)) {
        (Method::Newton, _) => "NEWTON",
        (_, Some(Predictor::ForwardEuler)) => "FORWARD_EULER",
        (_, Some(Predictor::ModifiedEuler)) => "MODIFIED_EULER",
        (_, None) => "",
    }
}

/// Paths written by [`emit_summary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryFiles {
    pub csv: PathBuf,
    pub table: PathBuf,
    pub reports: PathBuf,
}

/// Writes `summary.csv`, `table1.txt`, and `reports.json` into `dir`.
pub fn emit_summary(reports: &[RunReport], dir: &Path) -> Result<SummaryFiles> {
    if reports.is_empty() {
        return Err(CliError::EmptyReports);
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let files = SummaryFiles {
        csv: dir.join("summary.csv"),
        table: dir.join("table1.txt"),
        reports: dir.join("reports.json"),
    };

    let mut w = csv::Writer::from_path(&files.csv).map_err(|e| CliError::Serialize(e.to_string()))?;
    for r in reports {
        let c = r.cell.as_ref();
        w.serialize(Row {
            model: &r.model,
            alpha: r.alpha,
            predictor: predictor_name(r),
            n: c.map(|c| c.n_steps),
            eps_cg: c.map(|c| c.eps_cg),
            r_init: c.map(|c| c.r_init),
            r_update: c.map(|c| c.r_update),
            state_solves: r.ledger.state_solves,
            grad_evals: r.ledger.gradient_evals,
            b_applies: r.ledger.b_applies,
            h_applies: r.ledger.h_applies,
            total_linear: r.total_linear,
            stored_vectors: r.stored_vectors,
            converged: r.converged,
        })
        .map_err(|e| CliError::Serialize(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&files.csv, e))?;

    std::fs::write(&files.table, format_table(reports)).map_err(|e| CliError::io(&files.table, e))?;
    let json = serde_json::to_string_pretty(reports).map_err(|e| CliError::Serialize(e.to_string()))?;
    std::fs::write(&files.reports, json).map_err(|e| CliError::io(&files.reports, e))?;
    Ok(files)
}

/// Row labels name only the sweep axes that vary among the reports.
fn labels(reports: &[RunReport]) -> Vec<String> {
    let cells: Vec<_> = reports.iter().filter_map(|r| r.cell.as_ref()).collect();
    let varies = |f: &dyn Fn(&crate::config::Cell) -> String| {
        cells.iter().any(|c| f(c) != f(cells[0]))
    };
    let alpha_varies = reports.iter().any(|r| r.alpha != reports[0].alpha);
    let show_pred = varies(&|c| format!("{:?}", c.predictor));
    let show_n = varies(&|c| c.n_steps.to_string());
    let show_eps = varies(&|c| format!("{:e}", c.eps_cg));
    let show_rank = varies(&|c| format!("{},{}", c.r_init, c.r_update));
    reports
        .iter()
        .map(|r| {
            let mut parts = Vec::new();
            match &r.cell {
                None => parts.push("Optimization".to_string()),
                Some(c) => {
                    if show_pred {
                        parts.push(if c.predictor == Predictor::ForwardEuler { "FE" } else { "ME" }.to_string());
                    }
                    if show_n {
                        parts.push(format!("N={}", c.n_steps));
                    }
                    if show_eps {
                        parts.push(format!("eps_CG={:e}", c.eps_cg));
                    }
                    if show_rank {
                        parts.push(format!("r=({},{})", c.r_init, c.r_update));
                    }
                    if parts.is_empty() {
                        parts.push("Continuation".to_string());
                    }
                }
            }
            if alpha_varies {
                parts.push(format!("alpha={}", r.alpha));
            }
            if !r.converged {
                parts.push("(failed)".to_string());
            }
            parts.join(" ")
        })
        .collect()
}

/// Cost table with continuation rows first and re-optimization rows last.
pub fn format_table(reports: &[RunReport]) -> String {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by_key(|&i| (reports[i].method == Method::Newton, i));
    let labels = labels(reports);
    let width = order.iter().map(|&i| labels[i].len()).max().unwrap_or(0).max("Method".len());
    let w = reports[0].ledger.weights;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} | {:>6} | {:>8} | {:>6} | {:>8} | Total Linear Solves",
        "Method", "State", "Gradient", "B", "H"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 55));
    for &i in &order {
        let l = &reports[i].ledger;
        let _ = writeln!(
            out,
            "{:<width$} | {:>6} | {:>8} | {:>6} | {:>8} | {:>19}",
            labels[i], l.state_solves, l.gradient_evals, l.b_applies, l.h_applies, reports[i].total_linear
        );
    }
    let _ = writeln!(
        out,
        "\nUnits: state solve = {}, gradient = {}, B product = {}, H product = {} linear solves.",
        w.state, w.gradient, w.b, w.h
    );
    out
}
