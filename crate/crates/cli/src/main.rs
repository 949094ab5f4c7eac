//! `ostrovsky`: batch front-end for the solvers and auditors.
//!
//! Exit codes: 0 pass, 1 usage/config/data error, 2 numerical failure
//! (blow-up, failed lemma check, failed sweep acceptance).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ostrovsky_core::convergence::{compare_trajectories, run_sweep, RowStatus, Window};
use ostrovsky_core::estimates::{audit, AuditReport};
use ostrovsky_core::io::{read_trajectory, write_sweep, write_trajectory};
use ostrovsky_core::limit::fv_simulate_with;
use ostrovsky_core::nonlocal::make_initial_data;
use ostrovsky_core::regularized::RegularizedSolver;
use ostrovsky_core::{make_grid, Error};
use thiserror::Error as ThisError;

use crate::config::{load, AuditConfig, RunConfig, Solver, SweepFile};

pub const AUDIT_FILE: &str = "audit.json";

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("failed: {}", .0.join(", "))]
    Failed(Vec<String>),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(Error::BlowUp { .. }) | CliError::Failed(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Parser)]
#[command(name = "ostrovsky", version, about = "Viscous-dispersive Ostrovsky solver, limit solver and estimate auditor")]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accepted for interface stability; all computation is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; write the trajectory and its audit report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Audit a trajectory directory against the lemma checks.
    Audit {
        /// Directory written by `simulate`.
        dir: PathBuf,
        /// Optional JSON with `tolerances` and `audit` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run an ε-sweep and write the convergence table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Compare two trajectories on a space-time window.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// `t0,t1` or `t0,t1,x0,x1`; defaults to the common time span on the full torus.
        #[arg(long)]
        window: Option<String>,
        #[command(flatten)]
        output: Output,
    },
}

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.or(config).unwrap_or_else(|| fallback.to_owned())
}

fn write_report(dir: &Path, report: &AuditReport) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(AUDIT_FILE), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn summarize(report: &AuditReport) {
    for c in &report.checks {
        let limit = c.limit.map(|l| format!(" (limit {l:.3e})")).unwrap_or_default();
        println!("{:<14} {} {:.6e}{limit}", c.id, if c.pass { "pass" } else { "FAIL" }, c.value);
    }
}

fn simulate(config: &Path, output: Output) -> Result<(), CliError> {
    let cfg: RunConfig = load(config)?;
    let grid = make_grid(cfg.n, cfg.length)?;
    let out = out_dir(output.out, cfg.out.clone(), Path::new("out"));
    let traj = match cfg.solver {
        Solver::Regularized => {
            let params = cfg.params()?;
            let init = make_initial_data(&cfg.profile, &grid, params.eps, params.beta)?;
            let mut solver = RegularizedSolver::new(&grid, params)?;
            if !cfg.dealias {
                solver = solver.without_dealiasing();
            }
            if let Some(limit) = cfg.max_tail_fraction {
                solver = solver.with_tail_limit(limit);
            }
            solver.simulate(&init, cfg.t_end, cfg.save_every(), cfg.safety)?
        }
        Solver::Limit => {
            let init = make_initial_data(&cfg.profile, &grid, 0.0, 0.0)?;
            fv_simulate_with(&init.u0, cfg.gamma, cfg.t_end, cfg.save_every(), cfg.flux)?
        }
    };
    write_trajectory(&out, &traj)?;
    let report = audit(&traj, &cfg.tolerances, &cfg.audit)?;
    write_report(&out, &report)?;
    println!("wrote {} states to {}", traj.states.len(), out.display());
    summarize(&report);
    Ok(())
}

fn audit_dir(dir: &Path, config: Option<&Path>, output: Output) -> Result<(), CliError> {
    let cfg: AuditConfig = match config {
        Some(p) => load(p)?,
        None => AuditConfig::default(),
    };
    let traj = read_trajectory(dir)?;
    let report = audit(&traj, &cfg.tolerances, &cfg.audit)?;
    write_report(&out_dir(output.out, cfg.out, dir), &report)?;
    summarize(&report);
    let failures: Vec<String> = report.failures().into_iter().map(str::to_owned).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failures))
    }
}

fn sweep(config: &Path, output: Output) -> Result<(), CliError> {
    let file: SweepFile = load(config)?;
    let out = out_dir(output.out, file.out.clone(), Path::new("out"));
    let table = run_sweep(&file.sweep)?;
    write_sweep(&out, &table)?;
    println!("regime {:?}, reference {:?}", table.regime, table.reference);
    for r in &table.rows {
        match r.status {
            RowStatus::Ok => println!(
                "eps {:<10} beta {:<12.4e} err_u_l1 {:.4e} err_P_linf {:.4e}",
                r.eps, r.beta, r.errors.u_l1, r.errors.p_linf
            ),
            RowStatus::BlowUp { t, .. } => println!("eps {:<10} blow-up at t = {t}", r.eps),
        }
    }
    let acc = &table.acceptance;
    if !acc.unbounded_families.is_empty() {
        println!("unbounded families: {}", acc.unbounded_families.join(", "));
    }
    println!("acceptance: {}", if acc.pass { "pass" } else { "FAIL" });
    if !acc.enough_rows {
        return Err(CliError::Failed(vec!["more than half of the rows blew up".into()]));
    }
    if !acc.pass {
        let mut why = Vec::new();
        if !acc.u_l1_monotone {
            why.push(format!("err_u_l1 not decreasing by >= {}", file.sweep.tolerances.min_ratio));
        }
        if !acc.p_linf_decreasing {
            why.push("err_P_linf not decreasing".into());
        }
        return Err(CliError::Failed(why));
    }
    Ok(())
}

fn parse_window(spec: &str) -> Result<Vec<f64>, CliError> {
    let vals: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == 2 || v.len() == 4 => Ok(v),
        _ => Err(CliError::Usage(format!("--window {spec}: expected t0,t1 or t0,t1,x0,x1"))),
    }
}

fn compare(a: &Path, b: &Path, window: Option<&str>, output: Output) -> Result<(), CliError> {
    let (ta, tb) = (read_trajectory(a)?, read_trajectory(b)?);
    let length = ta.grid.length();
    let w = match window.map(parse_window).transpose()? {
        None => Window::full_torus(0.0, ta.t_end().min(tb.t_end()), length),
        Some(v) if v.len() == 2 => Window::full_torus(v[0], v[1], length),
        Some(v) => Window {
            t0: v[0],
            t1: v[1],
            x0: v[2],
            x1: v[3],
        },
    };
    let errors = compare_trajectories(&ta, &tb, &w)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({ "window": w, "errors": errors }))?;
    if let Some(dir) = output.out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("compare.json"), &json)?;
    }
    println!("{json}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, output } => simulate(&config, output),
        Command::Audit { dir, config, output } => audit_dir(&dir, config.as_deref(), output),
        Command::Sweep { config, output } => sweep(&config, output),
        Command::Compare { a, b, window, output } => compare(&a, &b, window.as_deref(), output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
