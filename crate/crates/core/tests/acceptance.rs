//! Acceptance criteria, one pass/fail line each. Exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ostrovsky_core::convergence::{run_sweep, ConvergenceTable, RowStatus, SweepConfig};
use ostrovsky_core::estimates::{
    audit_p, l2_balance_residual, p_identity_residual, trajectory_bound, FamilyBounds,
};
use ostrovsky_core::limit::{entropy_residual, fv_simulate_with, kruzhkov_levels, EntropyPair, FluxKind};
use ostrovsky_core::nonlocal::{make_initial_data, Profile};
use ostrovsky_core::regularized::{simulate, RegularizedSolver};
use ostrovsky_core::{make_grid, Coupling, Field, RegParams, Trajectory};

const TWO_PI: f64 = 2.0 * PI;
const SWEEP_EPS: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn sine() -> Profile {
    "sine".parse().unwrap()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Sine data on the 2π torus, n = 256, β = ε², γ = 1, T = 1.
fn balance_runs() -> Vec<(RegParams, Trajectory)> {
    let grid = make_grid(256, TWO_PI).unwrap();
    [0.1, 0.05, 0.025]
        .into_iter()
        .map(|eps| {
            let params = RegParams::new(eps, eps * eps, 1.0).unwrap();
            let init = make_initial_data(&sine(), &grid, eps, params.beta).unwrap();
            (params, simulate(&init, params, 1.0, 0.01, 0.4).unwrap())
        })
        .collect()
}

fn l2_balance(runs: &[(RegParams, Trajectory)]) -> Outcome {
    let res: Vec<f64> = runs.iter().map(|(p, t)| l2_balance_residual(t, p.eps)).collect();
    let pass = res.iter().all(|&r| r <= 1e-6);
    outcome(pass, format!("residuals {} (limit 1e-6)", sci(&res)))
}

fn conservative_limit() -> Outcome {
    let grid = make_grid(256, TWO_PI).unwrap();
    let params = RegParams::new(0.0, 0.01, 1.0).unwrap();
    let init = make_initial_data(&sine(), &grid, 0.0, 0.01).unwrap();
    let traj = simulate(&init, params, 0.5, 0.05, 0.4).unwrap();
    let (a, b) = (init.u0.norm_l2(), traj.last().u.norm_l2());
    let drift = (b - a).abs() / a;
    outcome(drift <= 1e-8, format!("relative L2 drift {drift:.2e} (limit 1e-8)"))
}

fn p_bound(runs: &[(RegParams, Trajectory)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (params, traj) in runs {
        let bound = trajectory_bound(traj, params).unwrap();
        let audit = audit_p(traj, bound.as_ref(), 0.1).unwrap();
        let identity = p_identity_residual(traj, params.eps).unwrap();
        pass &= bound.is_some() && audit.pass && identity <= 1e-5;
        parts.push(format!(
            "eps {}: max|P| {:.3} vs 1.1*C(T) {:.3}, identity {:.1e}",
            params.eps,
            audit.linf_p,
            1.1 * audit.bound,
            identity
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Sup error at T of the forced run with exact solution `e^{-t} sin(κx)`.
fn manufactured_error(steps: usize) -> f64 {
    let length = 1.0;
    let kappa = TWO_PI / length;
    let (eps, beta, gamma, t_end) = (0.05, 0.0025, 1.0, 0.5);
    let grid = make_grid(32, length).unwrap();
    // f = u*_t + u* u*_x − βu*_xxx − γP* − εu*_xx with P* = −e^{-t}cos(κx)/κ.
    let solver = RegularizedSolver::new(&grid, RegParams::new(eps, beta, gamma).unwrap())
        .unwrap()
        .with_forcing(move |t, x| {
            let e = (-t).exp();
            let (s, c) = (kappa * x).sin_cos();
            -e * s + kappa * e * e * s * c + (beta * kappa.powi(3) + gamma / kappa) * e * c + eps * kappa * kappa * e * s
        });
    let u0 = Field::from_fn(&grid, |x| (kappa * x).sin());
    let out = solver.integrate_fixed(&u0, 0.0, t_end, steps).unwrap();
    let exact = Field::from_fn(&grid, |x| (-t_end).exp() * (kappa * x).sin());
    out.u.zip_map(&exact, |a, b| a - b).norm_linf()
}

fn manufactured() -> Outcome {
    let (coarse, fine) = (manufactured_error(20), manufactured_error(40));
    let ratio = coarse / fine;
    outcome(
        ratio >= 15.0,
        format!("sup errors {coarse:.2e} -> {fine:.2e}, ratio {ratio:.1} (limit 15)"),
    )
}

/// Largest Kruzhkov residual over the levels, normalised by its tolerance.
fn worst_entropy_ratio(traj: &Trajectory, width: f64) -> f64 {
    let u0 = &traj.initial().u;
    let tol = 1e-3 * u0.norm_linf() * traj.t_end() * u0.grid().length();
    kruzhkov_levels(u0, 9)
        .into_iter()
        .map(|k| entropy_residual(traj, EntropyPair::kruzhkov(k), width).unwrap() / tol)
        .fold(0.0, f64::max)
}

fn entropy_reference() -> Outcome {
    let grid = make_grid(1024, TWO_PI).unwrap();
    let u0 = make_initial_data(&sine(), &grid, 0.0, 0.0).unwrap().u0;
    let (width, save) = (0.4, 0.1);
    let traj = fv_simulate_with(&u0, 0.0, 2.5, save, FluxKind::Rusanov).unwrap();
    let worst = worst_entropy_ratio(&traj, width);
    let mass = (traj.last().u.integral() - u0.integral()).abs();
    // The central flux has no dissipation and loses stability shortly after t = 2.2.
    let control = fv_simulate_with(&u0, 0.0, 2.0, save, FluxKind::Central).unwrap();
    let control_worst = worst_entropy_ratio(&control, width);
    let pass = worst <= 1.0 && mass <= 1e-12 && control_worst > 10.0;
    outcome(
        pass,
        format!("max residual/tol {worst:.3}, mass drift {mass:.1e}, central-flux control max residual/tol {control_worst:.1}"),
    )
}

fn sweep(p: f64) -> ConvergenceTable {
    let mut cfg = SweepConfig::new(SWEEP_EPS.to_vec(), Coupling { c: 1.0, p }, 1.0, 1.5, 512, TWO_PI, sine());
    cfg.audit.dissipation_k = 0.0;
    run_sweep(&cfg).unwrap()
}

fn convergence_trend(tables: &[(f64, &ConvergenceTable)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, table) in tables {
        let all_ok = table.rows.len() == SWEEP_EPS.len() && table.rows.iter().all(|r| r.status == RowStatus::Ok);
        let window_ok = (table.window.t0 - 0.15).abs() < 1e-12 && (table.window.t1 - 1.5).abs() < 1e-12;
        let u: Vec<f64> = table.rows.iter().map(|r| r.errors.u_l1).collect();
        let pl: Vec<f64> = table.rows.iter().map(|r| r.errors.p_linf).collect();
        let ratios: Vec<f64> = u.windows(2).map(|w| w[0] / w[1]).collect();
        let ok_u = u.windows(2).all(|w| w[1] < w[0]) && ratios.iter().all(|&r| r >= 1.2);
        let ok_p = pl.windows(2).all(|w| w[1] < w[0]);
        pass &= all_ok && window_ok && ok_u && ok_p;
        parts.push(format!("beta=eps^{p}: err_u_l1 ratios {ratios:.2?}, err_P_linf {}", sci(&pl)));
    }
    outcome(pass, parts.join("; "))
}

fn term4(table: &ConvergenceTable) -> Vec<f64> {
    table
        .rows
        .iter()
        .map(|r| r.audit.as_ref().and_then(|a| a.dissipation).map_or(f64::NAN, |d| d.terms[3]))
        .collect()
}

fn regime_separation(quadratic: &ConvergenceTable, cubic: &ConvergenceTable) -> Outcome {
    let (t2, t3) = (term4(quadratic), term4(cubic));
    let decay = t3[t3.len() - 1] / t3[0];
    let bounded = t2.iter().all(|v| v.is_finite()) && t2[t2.len() - 1] <= 2.0 * median(&t2);
    outcome(
        decay <= 0.25 && bounded,
        format!(
            "beta=eps^3 term-4 last/first {decay:.2e} (limit 0.25); beta=eps^2 term-4 last {:.3e} vs 2*median {:.3e}",
            t2[t2.len() - 1],
            2.0 * median(&t2)
        ),
    )
}

fn family_boundedness(table: &ConvergenceTable) -> Outcome {
    let fams: Vec<[f64; 8]> = table.families().iter().map(|(_, f)| f.to_array()).collect();
    let mut failing = Vec::new();
    if fams.len() != SWEEP_EPS.len() {
        failing.push("missing rows".to_owned());
    }
    for (j, name) in FamilyBounds::NAMES.iter().enumerate() {
        let col: Vec<f64> = fams.iter().map(|f| f[j]).collect();
        let last = col[col.len() - 1];
        if !col.iter().all(|v| v.is_finite()) || last > 2.0 * median(&col) {
            failing.push((*name).to_owned());
        }
    }
    let detail = if failing.is_empty() {
        format!("all {} families within 2x median at eps = {}", FamilyBounds::NAMES.len(), SWEEP_EPS[4])
    } else {
        format!("unbounded: {}", failing.join(", "))
    };
    outcome(failing.is_empty(), detail)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let runs = balance_runs();
    let (quadratic, cubic) = (sweep(2.0), sweep(3.0));
    let results = [
        ("1 L2 balance", l2_balance(&runs)),
        ("2 conservative limit", conservative_limit()),
        ("3 P bound", p_bound(&runs)),
        ("4 manufactured order", manufactured()),
        ("5 entropy reference", entropy_reference()),
        ("6 convergence trend", convergence_trend(&[(2.0, &quadratic), (3.0, &cubic)])),
        ("7 regime separation", regime_separation(&quadratic, &cubic)),
        ("8 family boundedness", family_boundedness(&quadratic)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} of {} passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
