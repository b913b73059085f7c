use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ptcont_cli::check::run_checks;
use ptcont_cli::presets::{preset, Figure, Scale};
use ptcont_cli::runner::failures;
use ptcont_cli::{emit_summary, run_experiment, threads_from_env, CliError, ExperimentConfig};

/// Pseudo-time continuation experiments.
#[derive(Parser)]
#[command(name = "ptcont", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML or JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a built-in experiment preset.
    Reproduce {
        figure: Figure,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        /// Output directory (default: results/<figure>-<scale>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the derivative and invariant checks.
    Check,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("ptcont: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Run { config } => sweep(ExperimentConfig::load(&config)?),
        Command::Reproduce { figure, scale, out } => {
            let mut cfg = preset(figure, scale);
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            sweep(cfg)
        }
        Command::Check => {
            let results = run_checks();
            for r in &results {
                println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(if results.iter().all(|r| r.pass) { 0 } else { 1 })
        }
    }
}

fn sweep(cfg: ExperimentConfig) -> Result<u8, CliError> {
    let threads = threads_from_env()?;
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let resolved = dir.join("config.toml");
    std::fs::write(&resolved, cfg.to_toml()?).map_err(|e| CliError::io(&resolved, e))?;

    let reports = run_experiment(&cfg, threads)?;
    let files = emit_summary(&reports, &dir)?;
    print!("{}", std::fs::read_to_string(&files.table).map_err(|e| CliError::io(&files.table, e))?);
    let failed = failures(&reports);
    for r in reports.iter().filter(|r| !r.converged) {
        eprintln!(
            "failed: {} ({})",
            r.trace_path.display(),
            r.error.as_deref().unwrap_or("not converged")
        );
    }
    println!("{} runs, {failed} failed; results in {}", reports.len(), dir.display());
    Ok(if failed == 0 { 0 } else { 1 })
}
